#include "propdet/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::LOG: return "LOG";
        case LossKind::LIN: return "LIN";
        case LossKind::THR: return "THR";
        case LossKind::COU: return "COU";
    }
    return "THR";
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "LOG") return LossKind::LOG;
    if (s == "LIN") return LossKind::LIN;
    if (s == "THR") return LossKind::THR;
    if (s == "COU") return LossKind::COU;
    throw ConfigError("unknown loss kind '" + s + "' (expected LOG|LIN|THR|COU)");
}

PairTerm pair_term(const RankLoss& loss, double s_more, double s_less) {
    const double diff = s_less - s_more;
    switch (loss.kind) {
        case LossKind::LOG: {
            const double p = sigmoid(diff);
            return {std::log1p(std::exp(diff)), -p, p};
        }
        case LossKind::LIN:
            return {1.0 + diff, -1.0, 1.0};
        case LossKind::THR: {
            const double m = 0.5 * (1.0 + diff);
            if (m > loss.theta) return {m, -0.5, 0.5};
            return {};
        }
        case LossKind::COU:
            return {s_less > s_more ? 1.0 : 0.0, 0.0, 0.0};
    }
    return {};
}

PairTerm training_pair_term(const RankLoss& loss, double s_more, double s_less) {
    if (loss.kind != LossKind::COU) return pair_term(loss, s_more, s_less);
    const double p = sigmoid(loss.temperature * (s_less - s_more));
    const double d = loss.temperature * p * (1.0 - p);
    return {p, -d, d};
}

double pair_loss(const RankLoss& loss, std::span<const double> score_more, std::span<const double> score_less) {
    if (score_more.size() != score_less.size())
        throw DataError("pair_loss: score lists differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < score_more.size(); ++i) {
        const double a = score_more[i], b = score_less[i];
        if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0))
            throw DataError("pair_loss: scores must lie in [0, 1]");
        total += pair_term(loss, a, b).loss;
    }
    return total;
}

std::vector<TokenPair> resolve_pairs(const Dataset& ds, std::span<const RankedPair> pairs,
                                     const ProperNounTagger* tagger) {
    const auto idx = index_by_id(ds);
    std::vector<Sequence> cache(ds.size());
    std::vector<bool> ready(ds.size(), false);
    auto tokens_of = [&](const std::string& id) -> const Sequence& {
        const auto it = idx.find(id);
        if (it == idx.end()) throw DataError("ranked pair references unknown document '" + id + "'");
        if (!ready[it->second]) {
            cache[it->second] = neural_tokens(ds.documents[it->second], tagger);
            ready[it->second] = true;
        }
        return cache[it->second];
    };
    std::vector<TokenPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.more_id == p.less_id) throw DataError("ranked pair has identical members '" + p.more_id + "'");
        out.push_back({tokens_of(p.more_id), tokens_of(p.less_id)});
    }
    return out;
}

namespace {

// Accumulates mean-over-batch training loss and gradients for pairs[begin, end).
double batch_pass(const NeuralModel& model, std::span<const TokenPair> pairs, const std::vector<std::size_t>& order,
                  std::size_t begin, std::size_t end, const RankLoss& loss, NetParams* grads) {
    const double inv = 1.0 / static_cast<double>(end - begin);
    double total = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
        const auto& pair = pairs[order[b]];
        const auto more = forward(model, pair.more);
        const auto less = forward(model, pair.less);
        const auto term = training_pair_term(loss, more.score, less.score);
        total += term.loss * inv;
        if (grads && (term.d_more != 0.0 || term.d_less != 0.0)) {
            // d score / d logit = s (1 - s)
            backward(model, more, term.d_more * more.score * (1.0 - more.score) * inv, *grads);
            backward(model, less, term.d_less * less.score * (1.0 - less.score) * inv, *grads);
        }
    }
    return total;
}

}  // namespace

void train_lstmr_inplace(NeuralModel& model, std::span<const TokenPair> pairs, const RankLoss& loss,
                         const NetTrainConfig& cfg, RankerRunInfo* info) {
    if (pairs.empty()) throw DataError("LSTMR training needs at least one ranked pair");
    if (loss.kind == LossKind::THR && !(loss.theta >= 0.0 && loss.theta <= 1.0))
        throw ConfigError("THR theta must lie in [0, 1]");
    if (loss.kind == LossKind::COU && !(loss.temperature > 0.0))
        throw ConfigError("COU surrogate temperature must be positive");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (info) {
        info->loss = loss;
        info->surrogate_used = loss.kind == LossKind::COU;
    }

    AdamOptimizer opt(model.params, cfg);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "lstmr/order"));
    std::size_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            NetParams grads = model.params.zeros_like();
            const double batch_loss = batch_pass(model, pairs, order, start, end, loss, &grads);
            ++step;
            if (!std::isfinite(batch_loss))
                throw TrainingDivergence("non-finite ranking loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(step));
            epoch_loss += batch_loss * static_cast<double>(end - start);
            opt.step(model.params, grads);
        }
        if (info) info->epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
}

NeuralModel train_lstmr(std::span<const TokenPair> pairs, const RankLoss& loss,
                        std::shared_ptr<const EmbeddingTable> embeddings, const NetArch& arch,
                        const NetTrainConfig& cfg, Granularity granularity, RankerRunInfo* info) {
    NeuralModel model = init_model(std::move(embeddings), arch, cfg.seed, granularity);
    train_lstmr_inplace(model, pairs, loss, cfg, info);
    return model;
}

LossFn ranking_loss(std::vector<TokenPair> pairs, RankLoss loss) {
    return [pairs = std::move(pairs), loss](const NeuralModel& model, NetParams* grads) {
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        return batch_pass(model, pairs, order, 0, pairs.size(), loss, grads);
    };
}

Classification classify(const NeuralModel& model, const Sequence& tokens, double tau) {
    const double s = score(model, tokens);
    return {s, s >= tau ? 1 : 0};
}

double concordance(const NeuralModel& model, std::span<const TokenPair> pairs) {
    if (pairs.empty()) return 0.0;
    std::size_t good = 0;
    for (const auto& p : pairs)
        if (score(model, p.more) > score(model, p.less)) ++good;
    return static_cast<double>(good) / static_cast<double>(pairs.size());
}

json run_metadata(const RankerRunInfo& info, double tau, const SamplingStrategy& sampling, std::uint64_t train_seed) {
    json j{{"loss", to_string(info.loss.kind)},
           {"tau", tau},
           {"sampling", {{"kind", to_string(sampling.kind)}, {"seed", sampling.seed}}},
           {"train_seed", train_seed}};
    if (info.loss.kind == LossKind::THR) j["theta"] = info.loss.theta;
    if (sampling.kind == SamplingKind::under) j["sampling"]["under_fraction"] = sampling.under_fraction;
    if (sampling.kind == SamplingKind::over) j["sampling"]["over_rate"] = sampling.over_rate;
    if (info.surrogate_used) {
        j["cou_surrogate"] = {{"used", true},
                              {"form", "sigmoid(temperature * (score_less - score_more))"},
                              {"temperature", info.loss.temperature}};
    }
    return j;
}

}  // namespace propdet
