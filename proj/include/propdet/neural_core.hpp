#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "propdet/corpus.hpp"
#include "propdet/textpipe.hpp"

namespace propdet {

using Sequence = std::vector<std::string>;  // case-folded tokens

enum class OovPolicy { zeros, seeded_uniform };

std::string to_string(OovPolicy p);
OovPolicy parse_oov_policy(const std::string& s);

// Pre-trained vectors; never updated by training.
struct EmbeddingTable {
    std::size_t dim = 100;
    std::unordered_map<std::string, Eigen::VectorXd> vectors;
    OovPolicy oov_policy = OovPolicy::zeros;
    std::uint64_t oov_seed = 0;

    // Unknown words: zeros, or U(-0.05, 0.05) drawn from a stream keyed by
    // the word itself, so repeated lookups agree without shared state.
    Eigen::VectorXd lookup(const std::string& word) const;
    bool contains(const std::string& word) const { return vectors.count(word) > 0; }
};

EmbeddingTable parse_embeddings(std::string_view content, std::size_t dim, OovPolicy oov = OovPolicy::zeros,
                                std::uint64_t oov_seed = 0);
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim,
                               OovPolicy oov = OovPolicy::zeros, std::uint64_t oov_seed = 0);

// Gate rows are stacked [input; forget; output; candidate], each `hidden` tall.
struct LstmDirection {
    Eigen::MatrixXd W;  // 4H x input_dim
    Eigen::MatrixXd U;  // 4H x H
    Eigen::VectorXd b;  // 4H
};

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;
};

// Trainable parameters; also used as the gradient accumulator.
struct NetParams {
    LstmDirection fwd;
    LstmDirection bwd;
    std::vector<DenseLayer> dense;  // rectifier between layers, last layer has one output

    NetParams zeros_like() const;
    double squared_norm() const;
    void scale(double s);
    void add(const NetParams& other);

    // Visit every parameter block as (name, data, size). Data is column-major.
    template <typename F>
    void visit(F&& f) {
        visit_direction("lstm_fwd", fwd, f);
        visit_direction("lstm_bwd", bwd, f);
        for (std::size_t k = 0; k < dense.size(); ++k) {
            const std::string p = "dense" + std::to_string(k);
            f(p + ".W", dense[k].W.data(), static_cast<std::size_t>(dense[k].W.size()));
            f(p + ".b", dense[k].b.data(), static_cast<std::size_t>(dense[k].b.size()));
        }
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<NetParams*>(this)->visit([&](const std::string& n, double* d, std::size_t s) {
            f(n, static_cast<const double*>(d), s);
        });
    }

private:
    template <typename F>
    static void visit_direction(const std::string& p, LstmDirection& d, F& f) {
        f(p + ".W", d.W.data(), static_cast<std::size_t>(d.W.size()));
        f(p + ".U", d.U.data(), static_cast<std::size_t>(d.U.size()));
        f(p + ".b", d.b.data(), static_cast<std::size_t>(d.b.size()));
    }
};

struct NetArch {
    std::size_t hidden = 128;                 // units per direction
    std::vector<std::size_t> dense{200, 50};  // hidden dense widths; a 1-unit output layer follows
    std::size_t max_seq_len = 0;              // 0: 64 for sentences, 512 for articles

    static std::size_t default_max_seq_len(Granularity g) { return g == Granularity::article ? 512 : 64; }
};

struct NeuralModel {
    std::shared_ptr<const EmbeddingTable> embeddings;
    NetArch arch;  // max_seq_len resolved
    NetParams params;
    std::uint64_t seed = 0;

    std::size_t hidden() const { return arch.hidden; }
    std::size_t input_dim() const { return embeddings ? embeddings->dim : 0; }

    nlohmann::json to_json() const;
    // Rejects shape mismatches against the supplied embedding table.
    static NeuralModel from_json(const nlohmann::json& j, std::shared_ptr<const EmbeddingTable> embeddings);
};

// Seeded uniform(+-1/sqrt(fan_in)) initialization.
NeuralModel init_model(std::shared_ptr<const EmbeddingTable> embeddings, NetArch arch, std::uint64_t seed,
                       Granularity granularity = Granularity::sentence);

struct ForwardCache {
    struct Direction {
        std::vector<std::size_t> time;      // time index per processing step
        std::vector<Eigen::VectorXd> gates; // activated [i; f; o; g] per step
        std::vector<Eigen::VectorXd> c;     // cell state per step
        std::vector<Eigen::VectorXd> h;     // hidden state per step
    };
    Eigen::MatrixXd inputs;  // input_dim x T (after truncation)
    Direction fwd, bwd;
    Eigen::VectorXd encoding;                 // 2H
    std::vector<Eigen::VectorXd> activations; // activations[0] = encoding, then each hidden layer
    std::vector<Eigen::VectorXd> preacts;     // hidden-layer pre-activations
    double logit = 0.0;
    double score = 0.5;
};

ForwardCache forward(const NeuralModel& model, const Sequence& tokens);
// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logit).
void backward(const NeuralModel& model, const ForwardCache& cache, double dlogit, NetParams& grads);

Eigen::VectorXd encode(const NeuralModel& model, const Sequence& tokens);
double score(const NeuralModel& model, const Sequence& tokens);

// OpenMP over sequences; score_all_serial is the reference path.
std::vector<double> score_all(const NeuralModel& model, std::span<const Sequence> seqs);
std::vector<double> score_all_serial(const NeuralModel& model, std::span<const Sequence> seqs);

struct NetTrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double clip_norm = 5.0;
};

class AdamOptimizer {
public:
    AdamOptimizer(const NetParams& shape, const NetTrainConfig& cfg);
    // Clips `grads` to cfg.clip_norm (global L2) and applies one update.
    void step(NetParams& params, NetParams& grads);

private:
    NetTrainConfig cfg_;
    NetParams m_, v_;
    long t_ = 0;
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean loss per epoch
};

// Mean binary cross-entropy, per-example forward/backward, shuffled batches.
NeuralModel train_classifier(std::span<const Sequence> seqs, std::span<const int> labels,
                             std::shared_ptr<const EmbeddingTable> embeddings, const NetArch& arch,
                             const NetTrainConfig& cfg, Granularity granularity = Granularity::sentence,
                             TrainLog* log = nullptr);

// Continues training an existing model (zero epochs returns it unchanged).
void train_classifier_inplace(NeuralModel& model, std::span<const Sequence> seqs, std::span<const int> labels,
                              const NetTrainConfig& cfg, TrainLog* log = nullptr);

double bce_from_logit(double logit, int label);
double sigmoid(double z);

// Loss over a fixed batch; fills `grads` (shaped like model.params) when non-null.
using LossFn = std::function<double(const NeuralModel&, NetParams*)>;

LossFn classifier_loss(std::vector<Sequence> seqs, std::vector<int> labels);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> group_errors;  // max relative error per block
    std::size_t entries_checked = 0;
    double embedding_gradient = 0.0;  // the table is not a trainable block; always zero
};

// Central finite differences against the analytic gradient. samples_per_group
// = 0 checks every entry.
GradCheckReport grad_check(const NeuralModel& model, const LossFn& loss, double eps,
                           std::size_t samples_per_group = 0, std::uint64_t seed = 0);

Sequence neural_tokens(const Document& doc, const ProperNounTagger* tagger);

}  // namespace propdet
