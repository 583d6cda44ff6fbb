#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propdet/evaluation.hpp"

namespace propdet {

namespace fs = std::filesystem;

struct DatasetEntry {
    std::string name;
    fs::path path;
    Granularity granularity = Granularity::sentence;
};

struct EvalSettings {
    std::string mode = "in_domain";  // in_domain | cross_domain | combined | sweep_sampling | sweep_losses
    std::vector<std::string> datasets;  // in_domain targets; empty = all
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::size_t k = 5;
    bool include_timing = false;
    bool include_complete = false;  // sweep_sampling: add a complete-sampling reference cell
    std::vector<double> over_rates;
    std::vector<double> under_fractions;
    std::vector<RankLoss> losses;
};

struct ExperimentConfig {
    nlohmann::json raw;    // after flag overrides; the hash covers exactly this
    fs::path base_dir;     // relative input paths resolve against it
    std::string hash;      // 16 hex digits
    std::uint64_t seed = 0;

    std::vector<DatasetEntry> datasets;
    std::vector<Method> methods;
    std::vector<FeatureSpec> feature_sets;
    std::vector<bool> pn_options;
    MethodConfig base;  // hyperparameters; resources attached later

    std::optional<fs::path> lexicon_path;
    std::optional<fs::path> embeddings_path;
    std::size_t embedding_dim = 0;
    OovPolicy oov_policy = OovPolicy::zeros;
    std::uint64_t oov_seed = 0;
    TaggerMode tagger_mode = TaggerMode::heuristic;
    std::optional<fs::path> tagger_lexicon;
    std::optional<fs::path> tag_sidecar;

    EvalSettings eval;
    std::string train_dataset;  // cmd_train; defaults to the first eval.train or dataset
    std::size_t top_n = 15;
    std::optional<fs::path> analyze_model;
    double gradcheck_tolerance = 1e-4;

    fs::path output_dir;  // resolved against PROPDET_OUTPUT_ROOT (or the working directory)
    std::vector<std::string> warnings;

    const DatasetEntry& dataset(const std::string& name) const;
    bool uses_neural() const;
};

// Reads JSON or TOML (by extension; .toml is TOML, anything else is tried as
// JSON first). `overrides` are "dotted.key=value" strings, value parsed as
// JSON when possible and as a string otherwise.
ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(nlohmann::json raw, const fs::path& base_dir);
void apply_override(nlohmann::json& raw, const std::string& assignment);
std::string config_hash(const nlohmann::json& raw);

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool ok() const { return errors.empty(); }
};
// Paths and cross-field constraints of an already parsed config.
ValidationReport validate_config(const ExperimentConfig& cfg);

struct Resources {
    std::map<std::string, Dataset> datasets;
    std::shared_ptr<const Lexicon> lexicon;
    std::shared_ptr<const EmbeddingTable> embeddings;
    std::shared_ptr<const ProperNounTagger> tagger;
};
// Loads every dataset plus the lexicon, tagger and (if any neural method is
// configured) the embedding table. Load errors surface before any training.
Resources load_resources(const ExperimentConfig& cfg);
MethodConfig method_config(const ExperimentConfig& cfg, const Resources& res, Method m, const FeatureSpec& fs,
                           bool pn);

// Seeds recorded in every artifact.
nlohmann::json seed_record(const ExperimentConfig& cfg);

// Commands. Each writes under cfg.output_dir, prints a short summary to
// `out` and returns an exit code; typed errors propagate to the caller.
int cmd_validate(const fs::path& config_path, const std::vector<std::string>& overrides, std::ostream& out);
int cmd_prepare(const ExperimentConfig& cfg, std::ostream& out);
int cmd_train(const ExperimentConfig& cfg, std::ostream& out);
int cmd_eval(const ExperimentConfig& cfg, std::ostream& out);
int cmd_analyze(const ExperimentConfig& cfg, const std::optional<fs::path>& model_path, std::ostream& out);
int cmd_gradcheck(const ExperimentConfig& cfg, std::ostream& out);

// Runs the configured eval mode and returns the report without writing it.
EvalReport run_experiment(const ExperimentConfig& cfg, const Resources& res);

// Central-difference check of linear_objective_gradient; returns the largest
// relative error |a - n| / max(|a|, |n|, 1e-6) over all weights and the bias.
double linear_gradient_error(const LinearModel& m, std::span<const SparseVector> X, std::span<const int> y,
                             double l2, double eps);

// 0 ok, 2 config, 3 data, 4 divergence, 1 anything else.
int exit_code_for(std::exception_ptr e);

}  // namespace propdet
