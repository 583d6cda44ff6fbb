#include "propdet/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ln(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double dot(const std::vector<double>& w, const SparseVector& x) {
    double s = 0.0;
    for (const auto& [i, v] : x.entries) s += w[i] * v;
    return s;
}

// d loss / d margin for one example.
double margin_gradient(LinearKind kind, double z, int y) {
    if (kind == LinearKind::LR) return sigmoid(z) - static_cast<double>(y);
    const double ys = y == 1 ? 1.0 : -1.0;
    return ys * z < 1.0 ? -ys : 0.0;
}

double example_loss(LinearKind kind, double z, int y) {
    const double ys = y == 1 ? 1.0 : -1.0;
    if (kind == LinearKind::LR) return softplus(-ys * z);
    return std::max(0.0, 1.0 - ys * z);
}

void check_inputs(std::span<const SparseVector> X, std::span<const int> y, std::size_t dim) {
    if (X.size() != y.size()) throw DataError("feature/label count mismatch");
    for (const auto& x : X) {
        if (x.dim != dim) throw DataError("feature vectors have inconsistent dimensions");
        for (const auto& [i, v] : x.entries)
            if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    for (int l : y)
        if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
}

}  // namespace

std::string to_string(LinearKind k) { return k == LinearKind::LR ? "LR" : "SVM"; }

LinearKind parse_linear_kind(const std::string& s) {
    if (s == "LR") return LinearKind::LR;
    if (s == "SVM") return LinearKind::SVM;
    throw ConfigError("unknown linear model kind '" + s + "'");
}

json LinearModel::to_json() const {
    return json{{"format_version", kFormatVersion},
                {"kind", to_string(kind)},
                {"bias", bias},
                {"weights", weights},
                {"feature_space_id", feature_space_id}};
}

LinearModel LinearModel::from_json(const json& j) {
    LinearModel m;
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw DataError("unsupported linear model format_version");
        m.kind = parse_linear_kind(j.at("kind").get<std::string>());
        m.bias = j.at("bias").get<double>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.feature_space_id = j.at("feature_space_id").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed linear model: ") + e.what());
    }
    return m;
}

LinearModel train_linear(std::span<const SparseVector> X, std::span<const int> y, const TrainConfig& cfg,
                         LinearKind kind) {
    if (X.size() < 2) throw DataError("linear training needs at least two examples");
    const std::size_t dim = X.front().dim;
    check_inputs(X, y, dim);
    const auto positives = std::count(y.begin(), y.end(), 1);
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(y.size()))
        throw DataError("linear training needs both classes");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (cfg.l2 < 0.0) throw ConfigError("l2 must be >= 0");
    if (cfg.learning_rate * cfg.l2 >= 1.0) throw ConfigError("learning_rate * l2 must be < 1");

    LinearModel m;
    m.kind = kind;
    m.weights.assign(dim, 0.0);

    // w = scale * v keeps the L2 shrink O(1) per step.
    std::vector<double>& v = m.weights;
    double scale = 1.0;
    std::vector<std::size_t> order(X.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "linear/order"));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle_each_epoch) rng.shuffle(order);
        const double eta = cfg.learning_rate / std::sqrt(static_cast<double>(epoch));
        for (std::size_t i : order) {
            const double z = scale * dot(v, X[i]) + m.bias;
            const double g = margin_gradient(kind, z, y[i]);
            scale *= 1.0 - eta * cfg.l2;
            if (g != 0.0) {
                const double step = eta * g / scale;
                for (const auto& [j, xv] : X[i].entries) v[j] -= step * xv;
                m.bias -= eta * g;
            }
            if (scale < 1e-9) {
                for (double& w : v) w *= scale;
                scale = 1.0;
            }
        }
    }
    for (double& w : v) w *= scale;
    return m;
}

double predict_score(const LinearModel& m, const SparseVector& x) {
    if (x.dim != m.dim())
        throw DataError("feature dimension " + std::to_string(x.dim) + " != model dimension " +
                        std::to_string(m.dim()));
    const double z = dot(m.weights, x) + m.bias;
    return m.kind == LinearKind::LR ? sigmoid(z) : z;
}

int predict_label(const LinearModel& m, const SparseVector& x) {
    const double s = predict_score(m, x);
    return m.kind == LinearKind::LR ? (s >= 0.5 ? 1 : 0) : (s >= 0.0 ? 1 : 0);
}

std::vector<int> predict_labels_serial(const LinearModel& m, std::span<const SparseVector> X) {
    std::vector<int> out;
    out.reserve(X.size());
    for (const auto& x : X) out.push_back(predict_label(m, x));
    return out;
}

std::vector<int> predict_labels(const LinearModel& m, std::span<const SparseVector> X) {
    for (const auto& x : X)
        if (x.dim != m.dim()) throw DataError("feature dimension does not match model");
    std::vector<int> out(X.size());
    const auto n = static_cast<std::ptrdiff_t>(X.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = predict_label(m, X[i]);
    return out;
}

double linear_objective(const LinearModel& m, std::span<const SparseVector> X, std::span<const int> y,
                        double l2) {
    check_inputs(X, y, m.dim());
    double loss = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) loss += example_loss(m.kind, dot(m.weights, X[i]) + m.bias, y[i]);
    loss /= static_cast<double>(X.size());
    double sq = 0.0;
    for (double w : m.weights) sq += w * w;
    return loss + 0.5 * l2 * sq;
}

std::vector<double> linear_objective_gradient(const LinearModel& m, std::span<const SparseVector> X,
                                              std::span<const int> y, double l2) {
    check_inputs(X, y, m.dim());
    std::vector<double> grad(m.dim() + 1, 0.0);
    const double inv_n = 1.0 / static_cast<double>(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double g = margin_gradient(m.kind, dot(m.weights, X[i]) + m.bias, y[i]) * inv_n;
        for (const auto& [j, xv] : X[i].entries) grad[j] += g * xv;
        grad.back() += g;
    }
    for (std::size_t j = 0; j < m.dim(); ++j) grad[j] += l2 * m.weights[j];
    return grad;
}

std::vector<TopFeature> top_features(const LinearModel& m, const FeatureSpace& space, std::size_t n,
                                     std::optional<FeatureGroup> only) {
    if (m.dim() != space.dim()) throw DataError("model dimension does not match feature space");
    std::size_t begin = 0, end = m.dim();
    if (only) {
        if (!space.has_group(*only) || !space.spec.groups.count(*only))
            throw ConfigError("feature group " + to_string(*only) + " is not part of this model");
        begin = space.group_offset(*only);
        end = begin + space.group_dim(*only);
    }
    if (n > end - begin)
        throw ConfigError("requested " + std::to_string(n) + " features but only " + std::to_string(end - begin) +
                          " exist");
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return m.weights[a] > m.weights[b]; });
    std::vector<TopFeature> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto name = space.feature_name(idx[k]);
        out.push_back({std::move(name.name), name.group, m.weights[idx[k]]});
    }
    return out;
}

}  // namespace propdet
