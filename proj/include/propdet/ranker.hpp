#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "propdet/corpus.hpp"
#include "propdet/neural_core.hpp"

namespace propdet {

enum class LossKind { LOG, LIN, THR, COU };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct RankLoss {
    LossKind kind = LossKind::THR;
    double theta = 0.4;         // THR only
    double temperature = 10.0;  // COU training surrogate only
};

// Per-pair loss value and partial derivatives with respect to the scores of
// the more-propagandistic side (s_more) and the less-propagandistic side (s_less).
struct PairTerm {
    double loss = 0.0;
    double d_more = 0.0;
    double d_less = 0.0;
};

// Exact loss for one ranked pair. COU is the discordance indicator with zero
// gradient; THR is gated by the strict inequality m > theta.
PairTerm pair_term(const RankLoss& loss, double s_more, double s_less);
// Loss used for gradient steps: identical to pair_term except COU, which is
// replaced by sigmoid(temperature * (s_less - s_more)).
PairTerm training_pair_term(const RankLoss& loss, double s_more, double s_less);

// Sum over pairs of the exact loss; position i is one ranked pair.
double pair_loss(const RankLoss& loss, std::span<const double> score_more, std::span<const double> score_less);

struct TokenPair {
    Sequence more;
    Sequence less;
};

// Resolve ranked pair ids against the dataset's documents.
std::vector<TokenPair> resolve_pairs(const Dataset& ds, std::span<const RankedPair> pairs,
                                     const ProperNounTagger* tagger);

struct RankerRunInfo {
    RankLoss loss;
    bool surrogate_used = false;
    std::vector<double> epoch_loss;  // mean training loss per pair
};

// Siamese training: both members of a pair pass through the same network and
// their gradients are summed. The loss is averaged over each batch.
NeuralModel train_lstmr(std::span<const TokenPair> pairs, const RankLoss& loss,
                        std::shared_ptr<const EmbeddingTable> embeddings, const NetArch& arch,
                        const NetTrainConfig& cfg, Granularity granularity = Granularity::sentence,
                        RankerRunInfo* info = nullptr);
void train_lstmr_inplace(NeuralModel& model, std::span<const TokenPair> pairs, const RankLoss& loss,
                         const NetTrainConfig& cfg, RankerRunInfo* info = nullptr);

// Mean training loss over a batch of pairs, with gradients into `grads`.
LossFn ranking_loss(std::vector<TokenPair> pairs, RankLoss loss);

struct Classification {
    double score;
    int label;
};

Classification classify(const NeuralModel& model, const Sequence& tokens, double tau = 0.5);

// Fraction of pairs with score(more) > score(less).
double concordance(const NeuralModel& model, std::span<const TokenPair> pairs);

nlohmann::json run_metadata(const RankerRunInfo& info, double tau, const SamplingStrategy& sampling,
                            std::uint64_t train_seed);

}  // namespace propdet
