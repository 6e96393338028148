#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afen/binary_io.hpp"
#include "afen/matrix.hpp"

namespace afen::gbdt {

struct BoostConfig {
    std::size_t n_rounds = 400;
    double learning_rate = 0.3;
    std::size_t max_depth = 6;
    double min_child_weight = 1.0;
    double lambda = 1.0;
    double gamma = 0.0;
    std::size_t class_count = 8;
    std::uint64_t seed = 0;  // no sampling is done; kept so runs record it

    void validate() const;
    friend bool operator==(const BoostConfig&, const BoostConfig&) = default;
};

/// Row-major float feature matrix (samples x features).
struct FeatureTable {
    std::size_t rows = 0, cols = 0;
    std::vector<float> values;

    FeatureTable() = default;
    FeatureTable(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}
    static FeatureTable from_matrix(const Matrix& m);
    float operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
    float& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
    std::span<const float> row(std::size_t r) const noexcept { return {values.data() + r * cols, cols}; }
};

/// Flat preorder node. Split: x[feature] < threshold goes left; NaN follows
/// default_left. Leaf: `value` is the margin contribution.
struct TreeNode {
    bool leaf = true;
    std::uint16_t feature = 0;
    float threshold = 0.0f;
    float value = 0.0f;
    bool default_left = true;
    std::int32_t left = -1, right = -1;

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    float predict(std::span<const float> x) const;
    std::size_t depth() const;
    friend bool operator==(const Tree&, const Tree&) = default;
};

struct GbdtModel {
    BoostConfig config;
    std::size_t feature_count = 0;
    std::vector<double> base_score;  // per class, log prior
    std::vector<Tree> trees;         // round-major: trees[round * K + k]

    std::size_t rounds() const noexcept { return config.class_count ? trees.size() / config.class_count : 0; }
    friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

/// Row-wise max-shifted softmax.
Matrix softmax_rows(const Matrix& margins);

struct GradHess {
    Matrix g, h;
};
GradHess grad_hess(const Matrix& probs, std::span<const int> labels);

/// -(1/N) sum log max(p[i, y_i], 1e-15).
double mlogloss(const Matrix& probs, std::span<const int> labels);

struct Split {
    std::size_t feature = 0;
    float threshold = 0.0f;
    double gain = 0.0;
    double left_hess = 0.0, right_hess = 0.0;
};

/// Per-feature sample orderings, ascending by value then index.
std::vector<std::vector<std::uint32_t>> presort(const FeatureTable& x);

/// Exact greedy search over all features for the samples in `sorted[f]`
/// (each list holds the node's samples ordered by feature f). Thresholds are
/// midpoints between consecutive distinct values. Returns nothing when no
/// candidate has positive gain with both children meeting min_child_weight.
std::optional<Split> best_split(const FeatureTable& x, const std::vector<std::span<const std::uint32_t>>& sorted,
                                std::span<const double> g, std::span<const double> h, const BoostConfig& config);

struct FitHistory {
    std::vector<double> train_mlogloss;  // one entry per completed round
};

/// Softmax boosting: each round grows one tree per class on the shared
/// softmax gradient. Throws NumericFailure if the training loss ever rises.
GbdtModel fit_gbdt(const FeatureTable& x, std::span<const int> labels, const BoostConfig& config,
                   FitHistory* history = nullptr);

Matrix predict_margins(const GbdtModel& model, const FeatureTable& x);
Matrix predict_gbdt(const GbdtModel& model, const FeatureTable& x);

std::string history_csv(const FitHistory& history);

inline constexpr std::uint32_t kForestVersion = 1;
Bytes encode_forest(const GbdtModel& model);
GbdtModel decode_forest(std::span<const std::uint8_t> bytes);
void save_forest(const std::filesystem::path& path, const GbdtModel& model);
GbdtModel load_forest(const std::filesystem::path& path);

}  // namespace afen::gbdt
