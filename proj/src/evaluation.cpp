#include "propdet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <tuple>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

Metrics compute_metrics(std::span<const int> pred, std::span<const int> gold) {
    if (pred.size() != gold.size())
        throw DataError("prediction count " + std::to_string(pred.size()) + " != gold count " +
                        std::to_string(gold.size()));
    if (pred.empty()) throw DataError("cannot compute metrics on zero instances");
    Metrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == 1, g = gold[i] == 1;
        if (p && g) ++m.tp;
        else if (p) ++m.fp;
        else if (g) ++m.fn;
        else ++m.tn;
    }
    m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

namespace {

Metrics aggregate(const std::vector<Metrics>& folds, Aggregation mode) {
    Metrics pooled;
    for (const auto& f : folds) {
        pooled.tp += f.tp;
        pooled.fp += f.fp;
        pooled.fn += f.fn;
        pooled.tn += f.tn;
    }
    if (mode == Aggregation::micro) {
        pooled.precision = (pooled.tp + pooled.fp) ? double(pooled.tp) / double(pooled.tp + pooled.fp) : 0.0;
        pooled.recall = (pooled.tp + pooled.fn) ? double(pooled.tp) / double(pooled.tp + pooled.fn) : 0.0;
        const double s = pooled.precision + pooled.recall;
        pooled.f1 = s > 0.0 ? 2.0 * pooled.precision * pooled.recall / s : 0.0;
        return pooled;
    }
    for (const auto& f : folds) {
        pooled.precision += f.precision;
        pooled.recall += f.recall;
        pooled.f1 += f.f1;
    }
    const double n = static_cast<double>(folds.size());
    pooled.precision /= n;
    pooled.recall /= n;
    pooled.f1 /= n;
    return pooled;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string sampling_label(const SamplingStrategy& s) {
    switch (s.kind) {
        case SamplingKind::complete: return "complete";
        case SamplingKind::under: return "under_fraction=" + number(s.under_fraction);
        case SamplingKind::over: return "over_rate=" + number(s.over_rate);
    }
    return "complete";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset prepare_train(const Dataset& train, const MethodConfig& cfg, std::uint64_t seed) {
    if (cfg.balance_train && train.has_labels()) return balance_undersample(train, derive_seed(seed, "balance"));
    return train;
}

const ProperNounTagger* active_tagger(const MethodConfig& cfg) {
    if (!cfg.remove_proper_nouns) return nullptr;
    if (!cfg.tagger) throw ConfigError("proper-noun removal requested without a tagger");
    return cfg.tagger.get();
}

std::vector<int> require_labels(const Dataset& ds) {
    std::vector<int> y;
    y.reserve(ds.size());
    for (const auto& d : ds.documents) {
        if (!d.label) throw DataError("document '" + d.id + "' in '" + ds.name + "' has no label");
        y.push_back(*d.label);
    }
    return y;
}

}  // namespace

std::string error_kind_of(std::exception_ptr e) {
    try {
        std::rethrow_exception(e);
    } catch (const ConfigError&) {
        return "config";
    } catch (const DataError&) {
        return "data";
    } catch (const TrainingDivergence&) {
        return "divergence";
    } catch (...) {
        return "other";
    }
}

std::string to_string(Method m) {
    switch (m) {
        case Method::LR: return "LR";
        case Method::SVM: return "SVM";
        case Method::LSTM: return "LSTM";
        case Method::LSTMR: return "LSTMR";
    }
    return "LR";
}

Method parse_method(const std::string& s) {
    if (s == "LR") return Method::LR;
    if (s == "SVM") return Method::SVM;
    if (s == "LSTM") return Method::LSTM;
    if (s == "LSTMR") return Method::LSTMR;
    throw ConfigError("unknown method '" + s + "' (expected LR|SVM|LSTM|LSTMR)");
}

bool is_linear(Method m) { return m == Method::LR || m == Method::SVM; }

std::string MethodConfig::feature_label() const { return is_linear(method) ? features.label() : "-"; }

void EvalReport::sort_cells() {
    std::stable_sort(cells.begin(), cells.end(), [](const EvalCell& a, const EvalCell& b) {
        return std::tie(a.mode, a.train_dataset, a.test_dataset, a.method, a.feature_group, a.pn_removed, a.sweep) <
               std::tie(b.mode, b.train_dataset, b.test_dataset, b.method, b.feature_group, b.pn_removed, b.sweep);
    });
}

// ---------------------------------------------------------------------------
// Test sets and trained models
// ---------------------------------------------------------------------------

TestSet::TestSet(const Dataset& ds) : name_(ds.name), granularity_(ds.granularity) {
    inputs_.reserve(ds.size());
    labels_.reserve(ds.size());
    for (const auto& d : ds.documents) {
        if (!d.label) throw DataError("test document '" + d.id + "' in '" + ds.name + "' has no label");
        Document input = d;
        input.label.reset();
        inputs_.push_back(std::move(input));
        labels_.push_back(*d.label);
    }
    if (inputs_.empty()) throw DataError("test set '" + ds.name + "' is empty");
}

std::vector<int> TestSet::reveal_labels() const {
    ++reveals_;
    if (observer_) observer_(name_);
    return labels_;
}

std::vector<double> TrainedModel::scores(std::span<const Document> docs) const {
    if (is_linear(method)) {
        const auto X = featurize_all(docs, *space);
        std::vector<double> out;
        out.reserve(X.size());
        for (const auto& x : X) out.push_back(predict_score(*linear, x));
        return out;
    }
    std::vector<Sequence> seqs;
    seqs.reserve(docs.size());
    for (const auto& d : docs) seqs.push_back(neural_tokens(d, tagger));
    return score_all(*neural, seqs);
}

std::vector<int> TrainedModel::predict(std::span<const Document> docs) const {
    if (is_linear(method)) return predict_labels(*linear, featurize_all(docs, *space));
    std::vector<int> out;
    for (double s : scores(docs)) out.push_back(s >= tau ? 1 : 0);
    return out;
}

std::vector<RankedPair> lstmr_pairs(const Dataset& train, const MethodConfig& cfg, std::uint64_t seed) {
    const Dataset prepared = prepare_train(train, cfg, seed);
    const std::uint64_t pair_seed = derive_seed(seed, "pairs");
    if (prepared.has_labels()) {
        SamplingStrategy s = cfg.sampling;
        s.seed = pair_seed;
        return make_pairs_labeled(prepared, s);
    }
    if (!cfg.ordering.empty()) return make_pairs_ordered(prepared, cfg.ordering, pair_seed);
    throw DataError("dataset '" + train.name + "' has neither labels nor an ordering spec for LSTMR pairs");
}

TrainedModel fit_lstmr_with_pairs(const Dataset& train, std::span<const RankedPair> pairs, const MethodConfig& cfg,
                                  std::uint64_t seed) {
    if (!cfg.embeddings) throw ConfigError("LSTMR needs an embedding table");
    TrainedModel tm;
    tm.method = Method::LSTMR;
    tm.tagger = active_tagger(cfg);
    tm.tau = cfg.tau;
    const auto token_pairs = resolve_pairs(train, pairs, tm.tagger);
    NetTrainConfig net = cfg.net;
    net.seed = derive_seed(seed, "train");
    RankerRunInfo info;
    tm.neural = train_lstmr(token_pairs, cfg.loss, cfg.embeddings, cfg.arch, net, train.granularity, &info);
    tm.pair_hash = pair_set_hash(pairs);
    SamplingStrategy s = cfg.sampling;
    s.seed = derive_seed(seed, "pairs");
    tm.metadata = run_metadata(info, cfg.tau, s, net.seed);
    tm.metadata["pair_count"] = pairs.size();
    tm.metadata["pair_set_hash"] = hex64(tm.pair_hash);
    return tm;
}

TrainedModel fit_method(const Dataset& train, const MethodConfig& cfg, std::uint64_t seed) {
    if (cfg.method == Method::LSTMR) return fit_lstmr_with_pairs(train, lstmr_pairs(train, cfg, seed), cfg, seed);

    const Dataset prepared = prepare_train(train, cfg, seed);
    const auto y = require_labels(prepared);
    TrainedModel tm;
    tm.method = cfg.method;
    tm.tau = cfg.tau;
    const std::uint64_t train_seed = derive_seed(seed, "train");

    if (is_linear(cfg.method)) {
        FeatureSpec spec = cfg.features;
        spec.remove_proper_nouns = cfg.remove_proper_nouns;
        tm.space = fit_feature_space(prepared, spec, cfg.lexicon, cfg.tagger);
        const auto X = featurize_all(prepared.documents, *tm.space);
        TrainConfig lc = cfg.linear;
        lc.seed = train_seed;
        tm.linear = train_linear(X, y, lc, cfg.method == Method::LR ? LinearKind::LR : LinearKind::SVM);
        tm.linear->feature_space_id = tm.space->id();
        tm.metadata = {{"train_seed", train_seed}, {"feature_dim", tm.space->dim()}};
        return tm;
    }

    if (!cfg.embeddings) throw ConfigError("LSTM needs an embedding table");
    tm.tagger = active_tagger(cfg);
    std::vector<Sequence> seqs;
    seqs.reserve(prepared.size());
    for (const auto& d : prepared.documents) seqs.push_back(neural_tokens(d, tm.tagger));
    NetTrainConfig net = cfg.net;
    net.seed = train_seed;
    tm.neural = train_classifier(seqs, y, cfg.embeddings, cfg.arch, net, prepared.granularity);
    tm.metadata = {{"train_seed", train_seed}, {"tau", cfg.tau}};
    return tm;
}

Metrics evaluate_model(const TrainedModel& model, TestSet& test, const EvalHooks& hooks) {
    if (hooks.before_predict) hooks.before_predict(test.name());
    const auto pred = model.predict(test.inputs());
    const auto gold = test.reveal_labels();
    return compute_metrics(pred, gold);
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

namespace {

EvalCell blank_cell(const std::string& mode, const std::string& train, const std::string& test,
                    const MethodConfig& cfg, std::uint64_t seed) {
    EvalCell c;
    c.mode = mode;
    c.train_dataset = train;
    c.test_dataset = test;
    c.method = cfg.method;
    c.feature_group = cfg.feature_label();
    c.pn_removed = cfg.remove_proper_nouns;
    c.seed = seed;
    return c;
}

TestSet make_test_set(const Dataset& ds, const EvalHooks& hooks) {
    TestSet t(ds);
    if (hooks.on_reveal) t.on_reveal(hooks.on_reveal);
    return t;
}

EvalCell cross_protocol(const std::string& mode, const Dataset& train, const Dataset& test, const MethodConfig& cfg,
                        std::uint64_t seed, const EvalHooks& hooks) {
    if (train.name == test.name)
        throw ConfigError("training and test datasets share the name '" + train.name + "'");
    const auto t0 = std::chrono::steady_clock::now();
    EvalCell cell = blank_cell(mode, train.name, test.name, cfg, seed);
    TestSet ts = make_test_set(test, hooks);
    const TrainedModel model = fit_method(train, cfg, seed);
    cell.metrics = evaluate_model(model, ts, hooks);
    cell.metadata = model.metadata;
    cell.runtime_seconds = seconds_since(t0);
    return cell;
}

}  // namespace

EvalCell run_in_domain(const Dataset& ds, const MethodConfig& cfg, std::size_t k, std::uint64_t seed,
                       const EvalHooks& hooks) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset prepared = prepare_train(ds, cfg, seed);
    const auto folds = split_kfold(prepared, k, derive_seed(seed, "split"));
    MethodConfig fold_cfg = cfg;
    fold_cfg.balance_train = false;  // already balanced as a whole

    EvalCell cell = blank_cell("in_domain", ds.name, ds.name, cfg, seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        TestSet ts = make_test_set(folds[f].test, hooks);
        const TrainedModel model = fit_method(folds[f].train, fold_cfg, derive_seed(seed, "fold/" + std::to_string(f)));
        cell.folds.push_back(evaluate_model(model, ts, hooks));
        if (f == 0) cell.metadata = model.metadata;
    }
    cell.metrics = aggregate(cell.folds, cfg.aggregation);
    cell.metadata["k"] = k;
    cell.metadata["aggregation"] = cfg.aggregation == Aggregation::macro ? "macro" : "micro";
    cell.runtime_seconds = seconds_since(t0);
    return cell;
}

EvalCell run_cross_domain(const Dataset& train, const Dataset& test, const MethodConfig& cfg, std::uint64_t seed,
                          const EvalHooks& hooks) {
    return cross_protocol("cross_domain", train, test, cfg, seed, hooks);
}

Dataset concatenate(std::span<const Dataset> parts) {
    Dataset out;
    out.granularity = Granularity::sentence;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!out.name.empty()) out.name += '+';
        out.name += parts[i].name;
        if (parts[i].granularity == Granularity::article) out.granularity = Granularity::article;
        for (const auto& d : parts[i].documents) {
            Document copy = d;
            copy.id = std::to_string(i) + ":" + d.id;
            out.documents.push_back(std::move(copy));
        }
    }
    return out;
}

EvalCell run_combined(std::span<const Dataset> train_list, const Dataset& test, const MethodConfig& cfg,
                      std::uint64_t seed, const EvalHooks& hooks) {
    if (train_list.empty()) throw ConfigError("combined training needs at least one dataset");
    for (const auto& d : train_list)
        if (d.name == test.name) throw ConfigError("test dataset '" + test.name + "' is also in the training list");
    const Dataset combined = concatenate(train_list);
    EvalCell cell = cross_protocol("combined", combined, test, cfg, seed, hooks);
    cell.metadata["parts"] = train_list.size();
    return cell;
}

EvalReport sweep_sampling(const Dataset& train, std::span<const Dataset> tests,
                          std::span<const SamplingStrategy> strategies, const MethodConfig& cfg, std::uint64_t seed) {
    for (const auto& s : strategies) {
        if (s.kind == SamplingKind::under && !(s.under_fraction > 0.0 && s.under_fraction <= 1.0))
            throw ConfigError("invalid under_fraction " + number(s.under_fraction));
        if (s.kind == SamplingKind::over && !(s.over_rate >= 1.0))
            throw ConfigError("invalid over_rate " + number(s.over_rate));
    }
    EvalReport report;
    MethodConfig base = cfg;
    base.method = Method::LSTMR;
    for (const auto& strategy : strategies) {
        MethodConfig c = base;
        c.sampling = strategy;
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<TrainedModel> model;
        std::string error, kind;
        try {
            model = fit_method(train, c, seed);
        } catch (const DataError& e) {
            error = e.what();
            kind = "data";
        } catch (const TrainingDivergence& e) {
            error = e.what();
            kind = "divergence";
        }
        const double train_time = seconds_since(t0);
        for (const auto& test : tests) {
            EvalCell cell = blank_cell("sweep_sampling", train.name, test.name, c, seed);
            cell.sweep = sampling_label(strategy);
            if (model) {
                TestSet ts(test);
                cell.metrics = evaluate_model(*model, ts);
                cell.metadata = model->metadata;
            } else {
                cell.error = error;
                cell.error_kind = kind;
            }
            cell.runtime_seconds = train_time;
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

EvalReport sweep_losses(const Dataset& train, std::span<const Dataset> tests, std::span<const RankLoss> losses,
                        const MethodConfig& cfg, std::uint64_t seed) {
    MethodConfig base = cfg;
    base.method = Method::LSTMR;
    const auto pairs = lstmr_pairs(train, base, seed);
    EvalReport report;
    for (const auto& loss : losses) {
        MethodConfig c = base;
        c.loss = loss;
        const auto t0 = std::chrono::steady_clock::now();
        const TrainedModel model = fit_lstmr_with_pairs(train, pairs, c, seed);
        const double train_time = seconds_since(t0);
        for (const auto& test : tests) {
            EvalCell cell = blank_cell("sweep_losses", train.name, test.name, c, seed);
            cell.sweep = "loss=" + to_string(loss.kind);
            TestSet ts(test);
            cell.metrics = evaluate_model(model, ts);
            cell.metadata = model.metadata;
            cell.runtime_seconds = train_time;
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

namespace {

EvalCell run_job(const GridJob& job) {
    const std::string mode = job.kind == GridJob::Kind::in_domain ? "in_domain" : "cross_domain";
    try {
        if (!job.train) throw ConfigError("grid job without training data");
        if (job.kind == GridJob::Kind::in_domain) return run_in_domain(*job.train, job.cfg, job.k, job.seed);
        if (!job.test) throw ConfigError("cross-domain grid job without test data");
        return run_cross_domain(*job.train, *job.test, job.cfg, job.seed);
    } catch (const std::exception& e) {
        EvalCell c = blank_cell(mode, job.train ? job.train->name : "", job.test ? job.test->name : "", job.cfg, job.seed);
        if (job.kind == GridJob::Kind::in_domain) c.test_dataset = c.train_dataset;
        c.error = e.what();
        c.error_kind = error_kind_of(std::current_exception());
        return c;
    }
}

}  // namespace

std::vector<EvalCell> run_grid_serial(std::span<const GridJob> jobs) {
    std::vector<EvalCell> out;
    out.reserve(jobs.size());
    for (const auto& j : jobs) out.push_back(run_job(j));
    return out;
}

std::vector<EvalCell> run_grid(std::span<const GridJob> jobs) {
    std::vector<EvalCell> out(jobs.size());
    const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = run_job(jobs[i]);
    return out;
}

}  // namespace propdet
