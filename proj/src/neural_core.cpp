#include "propdet/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

Eigen::VectorXd sigmoid_vec(const Eigen::VectorXd& a) {
    return a.unaryExpr([](double z) { return sigmoid(z); });
}

void fill_uniform(double* data, std::size_t n, double bound, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

LstmDirection make_direction(std::size_t in, std::size_t h) {
    return {Eigen::MatrixXd::Zero(4 * h, in), Eigen::MatrixXd::Zero(4 * h, h), Eigen::VectorXd::Zero(4 * h)};
}

void run_direction(const LstmDirection& p, const Eigen::MatrixXd& X, bool reverse, std::size_t H,
                   ForwardCache::Direction& out) {
    const auto T = static_cast<std::size_t>(X.cols());
    out.time.resize(T);
    out.gates.resize(T);
    out.c.resize(T);
    out.h.resize(T);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
    const auto hh = static_cast<Eigen::Index>(H);
    for (std::size_t s = 0; s < T; ++s) {
        const std::size_t t = reverse ? T - 1 - s : s;
        Eigen::VectorXd a = p.W * X.col(static_cast<Eigen::Index>(t)) + p.U * h + p.b;
        Eigen::VectorXd g(4 * H);
        g.head(3 * hh) = sigmoid_vec(a.head(3 * hh));
        g.tail(hh) = a.tail(hh).array().tanh();
        c = g.segment(hh, hh).cwiseProduct(c) + g.head(hh).cwiseProduct(g.tail(hh));
        h = g.segment(2 * hh, hh).cwiseProduct(c.array().tanh().matrix());
        out.time[s] = t;
        out.gates[s] = std::move(g);
        out.c[s] = c;
        out.h[s] = h;
    }
}

// BPTT for one direction; only the final hidden state receives gradient.
void backprop_direction(const LstmDirection& p, const Eigen::MatrixXd& X, const ForwardCache::Direction& d,
                        const Eigen::VectorXd& dh_final, std::size_t H, LstmDirection& g) {
    const std::size_t T = d.time.size();
    if (T == 0) return;
    const auto hh = static_cast<Eigen::Index>(H);
    Eigen::VectorXd dh = dh_final;
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(hh);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(hh);
    Eigen::VectorXd da(4 * hh);
    for (std::size_t s = T; s-- > 0;) {
        const auto& gate = d.gates[s];
        const auto i = gate.head(hh).array();
        const auto f = gate.segment(hh, hh).array();
        const auto o = gate.segment(2 * hh, hh).array();
        const auto cand = gate.tail(hh).array();
        const Eigen::ArrayXd tc = d.c[s].array().tanh();
        const Eigen::VectorXd& c_prev = s > 0 ? d.c[s - 1] : zero;
        const Eigen::VectorXd& h_prev = s > 0 ? d.h[s - 1] : zero;

        dc.array() += dh.array() * o * (1.0 - tc * tc);
        da.head(hh) = (dc.array() * cand * i * (1.0 - i)).matrix();
        da.segment(hh, hh) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
        da.segment(2 * hh, hh) = (dh.array() * tc * o * (1.0 - o)).matrix();
        da.tail(hh) = (dc.array() * i * (1.0 - cand * cand)).matrix();

        g.W.noalias() += da * X.col(static_cast<Eigen::Index>(d.time[s])).transpose();
        g.U.noalias() += da * h_prev.transpose();
        g.b += da;
        dh.noalias() = p.U.transpose() * da;
        dc = (dc.array() * f).matrix();
    }
}

}  // namespace

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_from_logit(double logit, int label) {
    // softplus(z) - y z
    const double sp = logit > 0.0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
    return sp - static_cast<double>(label) * logit;
}

std::string to_string(OovPolicy p) { return p == OovPolicy::zeros ? "zeros" : "seeded_uniform"; }

OovPolicy parse_oov_policy(const std::string& s) {
    if (s == "zeros") return OovPolicy::zeros;
    if (s == "seeded_uniform") return OovPolicy::seeded_uniform;
    throw ConfigError("unknown OOV policy '" + s + "' (expected zeros|seeded_uniform)");
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

Eigen::VectorXd EmbeddingTable::lookup(const std::string& word) const {
    if (const auto it = vectors.find(word); it != vectors.end()) return it->second;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    if (oov_policy == OovPolicy::seeded_uniform) {
        Rng rng(derive_seed(oov_seed, "oov/" + word));
        for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.uniform(-0.05, 0.05);
    }
    return v;
}

EmbeddingTable parse_embeddings(std::string_view content, std::size_t dim, OovPolicy oov, std::uint64_t oov_seed) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    EmbeddingTable table;
    table.dim = dim;
    table.oov_policy = oov;
    table.oov_seed = oov_seed;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string word;
        if (!(fields >> word)) continue;
        Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
        std::size_t k = 0;
        std::string tok;
        while (fields >> tok) {
            if (k >= dim) {
                ++k;
                continue;
            }
            char* end = nullptr;
            const double x = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0' || !std::isfinite(x))
                throw DataError("embeddings:" + std::to_string(line_no) + ": bad number '" + tok + "'");
            v[static_cast<Eigen::Index>(k++)] = x;
        }
        if (k != dim)
            throw DataError("embeddings:" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                            " values for '" + word + "', found " + std::to_string(k));
        table.vectors.insert_or_assign(std::move(word), std::move(v));
    }
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim, OovPolicy oov,
                               std::uint64_t oov_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_embeddings(buf.str(), dim, oov, oov_seed);
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

NetParams NetParams::zeros_like() const {
    NetParams z;
    z.fwd = {Eigen::MatrixXd::Zero(fwd.W.rows(), fwd.W.cols()), Eigen::MatrixXd::Zero(fwd.U.rows(), fwd.U.cols()),
             Eigen::VectorXd::Zero(fwd.b.size())};
    z.bwd = {Eigen::MatrixXd::Zero(bwd.W.rows(), bwd.W.cols()), Eigen::MatrixXd::Zero(bwd.U.rows(), bwd.U.cols()),
             Eigen::VectorXd::Zero(bwd.b.size())};
    for (const auto& l : dense)
        z.dense.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()), Eigen::VectorXd::Zero(l.b.size())});
    return z;
}

double NetParams::squared_norm() const {
    double s = 0.0;
    visit([&](const std::string&, const double* d, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) s += d[i] * d[i];
    });
    return s;
}

void NetParams::scale(double s) {
    visit([&](const std::string&, double* d, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) d[i] *= s;
    });
}

void NetParams::add(const NetParams& other) {
    std::vector<const double*> src;
    other.visit([&](const std::string&, const double* d, std::size_t) { src.push_back(d); });
    std::size_t k = 0;
    visit([&](const std::string&, double* d, std::size_t n) {
        const double* o = src[k++];
        for (std::size_t i = 0; i < n; ++i) d[i] += o[i];
    });
}

NeuralModel init_model(std::shared_ptr<const EmbeddingTable> embeddings, NetArch arch, std::uint64_t seed,
                       Granularity granularity) {
    if (!embeddings) throw ConfigError("neural model needs an embedding table");
    if (arch.hidden == 0) throw ConfigError("hidden size must be positive");
    if (arch.max_seq_len == 0) arch.max_seq_len = NetArch::default_max_seq_len(granularity);

    NeuralModel m;
    m.embeddings = std::move(embeddings);
    m.arch = arch;
    m.seed = seed;
    const std::size_t D = m.embeddings->dim, H = arch.hidden;
    m.params.fwd = make_direction(D, H);
    m.params.bwd = make_direction(D, H);
    std::size_t in = 2 * H;
    std::vector<std::size_t> widths = arch.dense;
    widths.push_back(1);
    for (std::size_t w : widths) {
        if (w == 0) throw ConfigError("dense layer widths must be positive");
        m.params.dense.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(in)),
                                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w))});
        in = w;
    }

    Rng rng(derive_seed(seed, "neural/init"));
    const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(D + H));
    m.params.visit([&](const std::string& name, double* d, std::size_t n) {
        double bound = lstm_bound;
        if (name.rfind("dense", 0) == 0) {
            const auto k = std::stoul(name.substr(5, name.find('.') - 5));
            bound = 1.0 / std::sqrt(static_cast<double>(m.params.dense[k].W.cols()));
        }
        fill_uniform(d, n, bound, rng);
    });
    return m;
}

json NeuralModel::to_json() const {
    json params_json = json::object();
    params.visit([&](const std::string& name, const double* d, std::size_t n) {
        params_json[name] = std::vector<double>(d, d + n);
    });
    return json{{"format_version", kFormatVersion},
                {"kind", "neural"},
                {"embedding_dim", input_dim()},
                {"hidden", arch.hidden},
                {"dense", arch.dense},
                {"max_seq_len", arch.max_seq_len},
                {"seed", seed},
                {"layout", "column-major"},
                {"params", params_json}};
}

NeuralModel NeuralModel::from_json(const json& j, std::shared_ptr<const EmbeddingTable> embeddings) {
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw DataError("unsupported neural model format_version");
        if (j.at("kind").get<std::string>() != "neural") throw DataError("not a neural model file");
        if (!embeddings) throw DataError("neural model needs an embedding table");
        if (j.at("embedding_dim").get<std::size_t>() != embeddings->dim)
            throw DataError("model expects embedding dim " + j["embedding_dim"].dump() + " but table has " +
                            std::to_string(embeddings->dim));
        NetArch arch;
        arch.hidden = j.at("hidden").get<std::size_t>();
        arch.dense = j.at("dense").get<std::vector<std::size_t>>();
        arch.max_seq_len = j.at("max_seq_len").get<std::size_t>();
        NeuralModel m = init_model(std::move(embeddings), arch, j.at("seed").get<std::uint64_t>());
        const auto& pj = j.at("params");
        m.params.visit([&](const std::string& name, double* d, std::size_t n) {
            const auto values = pj.at(name).get<std::vector<double>>();
            if (values.size() != n)
                throw DataError("parameter block '" + name + "' has " + std::to_string(values.size()) +
                                " values, expected " + std::to_string(n));
            std::copy(values.begin(), values.end(), d);
        });
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed neural model: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

ForwardCache forward(const NeuralModel& model, const Sequence& tokens) {
    ForwardCache cache;
    const std::size_t H = model.hidden(), D = model.input_dim();
    const std::size_t T = std::min(tokens.size(), model.arch.max_seq_len);
    cache.inputs.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) cache.inputs.col(static_cast<Eigen::Index>(t)) = model.embeddings->lookup(tokens[t]);

    run_direction(model.params.fwd, cache.inputs, false, H, cache.fwd);
    run_direction(model.params.bwd, cache.inputs, true, H, cache.bwd);

    cache.encoding = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * H));
    if (T > 0) {
        cache.encoding.head(static_cast<Eigen::Index>(H)) = cache.fwd.h.back();
        cache.encoding.tail(static_cast<Eigen::Index>(H)) = cache.bwd.h.back();
    }

    const auto& dense = model.params.dense;
    cache.activations.push_back(cache.encoding);
    for (std::size_t k = 0; k + 1 < dense.size(); ++k) {
        Eigen::VectorXd z = dense[k].W * cache.activations.back() + dense[k].b;
        cache.activations.push_back(z.cwiseMax(0.0));
        cache.preacts.push_back(std::move(z));
    }
    cache.logit = (dense.back().W * cache.activations.back() + dense.back().b)(0);
    cache.score = sigmoid(cache.logit);
    return cache;
}

void backward(const NeuralModel& model, const ForwardCache& cache, double dlogit, NetParams& grads) {
    const auto& dense = model.params.dense;
    const std::size_t L = dense.size();
    Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, dlogit);
    for (std::size_t k = L; k-- > 0;) {
        grads.dense[k].W.noalias() += delta * cache.activations[k].transpose();
        grads.dense[k].b += delta;
        Eigen::VectorXd below = dense[k].W.transpose() * delta;
        if (k > 0) {
            const auto& z = cache.preacts[k - 1];
            for (Eigen::Index i = 0; i < below.size(); ++i)
                if (z[i] <= 0.0) below[i] = 0.0;
        }
        delta = std::move(below);
    }
    const auto H = static_cast<Eigen::Index>(model.hidden());
    backprop_direction(model.params.fwd, cache.inputs, cache.fwd, delta.head(H), model.hidden(), grads.fwd);
    backprop_direction(model.params.bwd, cache.inputs, cache.bwd, delta.tail(H), model.hidden(), grads.bwd);
}

Eigen::VectorXd encode(const NeuralModel& model, const Sequence& tokens) { return forward(model, tokens).encoding; }

double score(const NeuralModel& model, const Sequence& tokens) { return forward(model, tokens).score; }

std::vector<double> score_all_serial(const NeuralModel& model, std::span<const Sequence> seqs) {
    std::vector<double> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(score(model, s));
    return out;
}

std::vector<double> score_all(const NeuralModel& model, std::span<const Sequence> seqs) {
    std::vector<double> out(seqs.size());
    const auto n = static_cast<std::ptrdiff_t>(seqs.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = score(model, seqs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const NetParams& shape, const NetTrainConfig& cfg)
    : cfg_(cfg), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void AdamOptimizer::step(NetParams& params, NetParams& grads) {
    if (cfg_.clip_norm > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > cfg_.clip_norm) grads.scale(cfg_.clip_norm / norm);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    std::vector<double*> g_blocks, m_blocks, v_blocks;
    grads.visit([&](const std::string&, double* d, std::size_t) { g_blocks.push_back(d); });
    m_.visit([&](const std::string&, double* d, std::size_t) { m_blocks.push_back(d); });
    v_.visit([&](const std::string&, double* d, std::size_t) { v_blocks.push_back(d); });
    std::size_t k = 0;
    params.visit([&](const std::string&, double* p, std::size_t n) {
        double* g = g_blocks[k];
        double* m = m_blocks[k];
        double* v = v_blocks[k];
        ++k;
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            p[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
        }
    });
}

void train_classifier_inplace(NeuralModel& model, std::span<const Sequence> seqs, std::span<const int> labels,
                              const NetTrainConfig& cfg, TrainLog* log) {
    if (seqs.size() != labels.size()) throw DataError("sequence/label count mismatch");
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size()))
        throw DataError("neural classifier training needs both classes");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");

    AdamOptimizer opt(model.params, cfg);
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "neural/order"));
    std::size_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            NetParams grads = model.params.zeros_like();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const auto cache = forward(model, seqs[i]);
                batch_loss += bce_from_logit(cache.logit, labels[i]);
                backward(model, cache, (cache.score - static_cast<double>(labels[i])) * inv, grads);
            }
            ++step;
            if (!std::isfinite(batch_loss))
                throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(step));
            epoch_loss += batch_loss;
            opt.step(model.params, grads);
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
}

NeuralModel train_classifier(std::span<const Sequence> seqs, std::span<const int> labels,
                             std::shared_ptr<const EmbeddingTable> embeddings, const NetArch& arch,
                             const NetTrainConfig& cfg, Granularity granularity, TrainLog* log) {
    NeuralModel model = init_model(std::move(embeddings), arch, cfg.seed, granularity);
    train_classifier_inplace(model, seqs, labels, cfg, log);
    return model;
}

LossFn classifier_loss(std::vector<Sequence> seqs, std::vector<int> labels) {
    return [seqs = std::move(seqs), labels = std::move(labels)](const NeuralModel& model, NetParams* grads) {
        const double inv = 1.0 / static_cast<double>(seqs.size());
        double loss = 0.0;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            const auto cache = forward(model, seqs[i]);
            loss += bce_from_logit(cache.logit, labels[i]) * inv;
            if (grads) backward(model, cache, (cache.score - static_cast<double>(labels[i])) * inv, *grads);
        }
        return loss;
    };
}

GradCheckReport grad_check(const NeuralModel& model, const LossFn& loss, double eps, std::size_t samples_per_group,
                           std::uint64_t seed) {
    NetParams analytic = model.params.zeros_like();
    loss(model, &analytic);

    std::vector<const double*> analytic_blocks;
    analytic.visit([&](const std::string&, const double* d, std::size_t) { analytic_blocks.push_back(d); });

    NeuralModel probe = model;
    GradCheckReport report;
    Rng rng(derive_seed(seed, "gradcheck"));
    std::size_t k = 0;
    probe.params.visit([&](const std::string& name, double* p, std::size_t n) {
        const double* a = analytic_blocks[k++];
        std::vector<std::size_t> idx;
        if (samples_per_group == 0 || samples_per_group >= n) {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), 0);
        } else {
            idx = rng.sample_sorted(n, samples_per_group);
        }
        double worst = 0.0;
        for (std::size_t i : idx) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double up = loss(probe, nullptr);
            p[i] = saved - eps;
            const double down = loss(probe, nullptr);
            p[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(a[i] - numeric) / denom);
            ++report.entries_checked;
        }
        report.group_errors.emplace_back(name, worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    });
    return report;
}

Sequence neural_tokens(const Document& doc, const ProperNounTagger* tagger) {
    return folded_surfaces(prepare_tokens(doc, tagger));
}

}  // namespace propdet
