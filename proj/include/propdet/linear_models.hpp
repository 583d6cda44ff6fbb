#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "propdet/features.hpp"

namespace propdet {

enum class LinearKind { LR, SVM };

std::string to_string(LinearKind k);
LinearKind parse_linear_kind(const std::string& s);

struct LinearModel {
    LinearKind kind = LinearKind::LR;
    std::vector<double> weights;
    double bias = 0.0;
    std::string feature_space_id;

    std::size_t dim() const { return weights.size(); }

    nlohmann::json to_json() const;
    static LinearModel from_json(const nlohmann::json& j);
};

struct TrainConfig {
    double learning_rate = 0.1;
    double l2 = 1e-4;
    int epochs = 20;
    std::uint64_t seed = 0;
    bool shuffle_each_epoch = true;
};

// Per-example subgradient descent on mean loss + (l2/2)|w|^2, step size
// learning_rate / sqrt(epoch). Labels are 0/1.
LinearModel train_linear(std::span<const SparseVector> X, std::span<const int> y, const TrainConfig& cfg,
                         LinearKind kind);

// LR: sigmoid(w.x + b); SVM: raw margin w.x + b.
double predict_score(const LinearModel& m, const SparseVector& x);
int predict_label(const LinearModel& m, const SparseVector& x);

std::vector<int> predict_labels(const LinearModel& m, std::span<const SparseVector> X);
std::vector<int> predict_labels_serial(const LinearModel& m, std::span<const SparseVector> X);

// Training objective and its (sub)gradient, exposed for verification.
double linear_objective(const LinearModel& m, std::span<const SparseVector> X, std::span<const int> y,
                        double l2);
// Gradient laid out as [d/dw_0 ... d/dw_{dim-1}, d/db].
std::vector<double> linear_objective_gradient(const LinearModel& m, std::span<const SparseVector> X,
                                              std::span<const int> y, double l2);

struct TopFeature {
    std::string term;
    FeatureGroup group;
    double weight;
};

// n largest weights, sorted non-increasing; ties keep feature order.
// `only` restricts the ranking to one feature group.
std::vector<TopFeature> top_features(const LinearModel& m, const FeatureSpace& space, std::size_t n,
                                     std::optional<FeatureGroup> only = std::nullopt);

}  // namespace propdet
