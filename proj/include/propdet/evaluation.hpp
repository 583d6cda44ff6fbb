#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "propdet/corpus.hpp"
#include "propdet/features.hpp"
#include "propdet/linear_models.hpp"
#include "propdet/neural_core.hpp"
#include "propdet/ranker.hpp"

namespace propdet {

struct Metrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

// Propaganda (1) is the positive class.
Metrics compute_metrics(std::span<const int> pred, std::span<const int> gold);

enum class Method { LR, SVM, LSTM, LSTMR };
enum class Aggregation { macro, micro };

std::string to_string(Method m);
Method parse_method(const std::string& s);
bool is_linear(Method m);

// Everything needed to train one method. Resources are shared, immutable.
struct MethodConfig {
    Method method = Method::LR;
    FeatureSpec features;  // linear methods
    TrainConfig linear;
    NetArch arch;
    NetTrainConfig net;
    RankLoss loss;
    SamplingStrategy sampling;         // LSTMR pair construction; seed is derived per run
    std::vector<OrderingSpec> ordering; // LSTMR on unlabeled, group-ordered training data
    double tau = 0.5;
    bool remove_proper_nouns = false;  // applies to every method
    bool balance_train = true;
    Aggregation aggregation = Aggregation::macro;

    std::shared_ptr<const Lexicon> lexicon;
    std::shared_ptr<const EmbeddingTable> embeddings;
    std::shared_ptr<const ProperNounTagger> tagger;

    std::string feature_label() const;  // "-" for neural methods
};

// A labeled evaluation set whose labels are only reachable through
// reveal_labels(); inputs() carries the documents with labels stripped.
class TestSet {
public:
    explicit TestSet(const Dataset& ds);

    const std::string& name() const { return name_; }
    Granularity granularity() const { return granularity_; }
    std::span<const Document> inputs() const { return inputs_; }
    std::vector<int> reveal_labels() const;
    std::size_t reveal_count() const { return reveals_; }
    void on_reveal(std::function<void(const std::string&)> observer) { observer_ = std::move(observer); }

private:
    std::string name_;
    Granularity granularity_;
    std::vector<Document> inputs_;
    std::vector<int> labels_;
    mutable std::size_t reveals_ = 0;
    std::function<void(const std::string&)> observer_;
};

struct TrainedModel {
    Method method = Method::LR;
    std::optional<FeatureSpace> space;
    std::optional<LinearModel> linear;
    std::optional<NeuralModel> neural;
    const ProperNounTagger* tagger = nullptr;  // neural token preparation
    double tau = 0.5;
    nlohmann::json metadata = nlohmann::json::object();
    std::uint64_t pair_hash = 0;

    std::vector<int> predict(std::span<const Document> docs) const;
    std::vector<double> scores(std::span<const Document> docs) const;
};

// Trains on `train` (balanced first when cfg.balance_train). Everything is
// fitted on `train` only.
TrainedModel fit_method(const Dataset& train, const MethodConfig& cfg, std::uint64_t seed);

// Same, with an explicit pair list for LSTMR (shared across loss sweeps).
TrainedModel fit_lstmr_with_pairs(const Dataset& train, std::span<const RankedPair> pairs, const MethodConfig& cfg,
                                  std::uint64_t seed);

// Pair list fit_method would build for LSTMR on `train` (after balancing).
std::vector<RankedPair> lstmr_pairs(const Dataset& train, const MethodConfig& cfg, std::uint64_t seed);

struct EvalCell {
    std::string mode;  // in_domain | cross_domain | combined | sweep_sampling | sweep_losses
    std::string train_dataset;
    std::string test_dataset;
    Method method = Method::LR;
    std::string feature_group;
    bool pn_removed = false;
    std::string sweep;  // e.g. "over_rate=2", "loss=THR"
    Metrics metrics;
    std::vector<Metrics> folds;
    std::uint64_t seed = 0;
    double runtime_seconds = 0.0;
    nlohmann::json metadata = nlohmann::json::object();
    std::string error;
    std::string error_kind;  // config | data | divergence | other
};

// Classifies an in-flight exception as "config", "data", "divergence" or "other".
std::string error_kind_of(std::exception_ptr e);

struct EvalReport {
    std::vector<EvalCell> cells;
    nlohmann::json context = nlohmann::json::object();  // config hash, seeds

    void sort_cells();
};

struct EvalHooks {
    std::function<void(const std::string& test_name)> before_predict;
    std::function<void(const std::string& test_name)> on_reveal;
};

EvalCell run_in_domain(const Dataset& ds, const MethodConfig& cfg, std::size_t k, std::uint64_t seed,
                       const EvalHooks& hooks = {});
EvalCell run_cross_domain(const Dataset& train, const Dataset& test, const MethodConfig& cfg, std::uint64_t seed,
                          const EvalHooks& hooks = {});
EvalCell run_combined(std::span<const Dataset> train_list, const Dataset& test, const MethodConfig& cfg,
                      std::uint64_t seed, const EvalHooks& hooks = {});

// Scores `model` on `test`; labels are revealed once, after prediction.
Metrics evaluate_model(const TrainedModel& model, TestSet& test, const EvalHooks& hooks = {});

// LSTMR, one cell per (strategy, test set); failing strategies are recorded
// on their cells and the sweep continues.
EvalReport sweep_sampling(const Dataset& train, std::span<const Dataset> tests,
                          std::span<const SamplingStrategy> strategies, const MethodConfig& cfg, std::uint64_t seed);
// LSTMR, one cell per (loss, test set), all losses trained on one pair set.
EvalReport sweep_losses(const Dataset& train, std::span<const Dataset> tests, std::span<const RankLoss> losses,
                        const MethodConfig& cfg, std::uint64_t seed);

Dataset concatenate(std::span<const Dataset> parts);

// Independent cells of an experiment grid.
struct GridJob {
    enum class Kind { in_domain, cross_domain } kind = Kind::cross_domain;
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;  // cross_domain only
    MethodConfig cfg;
    std::size_t k = 5;
    std::uint64_t seed = 0;
};

// OpenMP over cells (each cell trains single-threaded); run_grid_serial is
// the reference path. Failures are recorded on the cell.
std::vector<EvalCell> run_grid(std::span<const GridJob> jobs);
std::vector<EvalCell> run_grid_serial(std::span<const GridJob> jobs);

}  // namespace propdet
