#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afen/matrix.hpp"

namespace afen::metrics {

/// w * p_cnn + (1 - w) * p_gbdt, elementwise.
Matrix soft_vote(const Matrix& p_cnn, const Matrix& p_gbdt, double w_cnn);

/// Per-row argmax, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& probs);

struct Confusion {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // row = true class, column = predicted

    explicit Confusion(std::size_t k = 0) : classes(k), counts(k * k, 0) {}
    std::uint64_t operator()(std::size_t t, std::size_t p) const noexcept { return counts[t * classes + p]; }
    std::uint64_t& operator()(std::size_t t, std::size_t p) noexcept { return counts[t * classes + p]; }
    std::uint64_t total() const noexcept;
    std::uint64_t support(std::size_t t) const noexcept;
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t classes);

struct PrecisionRecall {
    double precision = 0.0;              // 0 when the class is never predicted
    std::optional<double> recall;        // empty when the class has no support
    std::uint64_t support = 0;
};

std::vector<PrecisionRecall> precision_recall(const Confusion& c);

/// One-vs-rest ROC AUC per class by the Mann-Whitney rank statistic (ties
/// count 1/2); empty for classes lacking positives or negatives.
std::vector<std::optional<double>> auc_per_class(const Matrix& probs, std::span<const int> labels);

/// Mean of the defined per-class AUCs. Throws DegenerateLabels when fewer
/// than two classes occur in `labels`.
double macro_auc_ovr(const Matrix& probs, std::span<const int> labels);

struct ClassReport {
    std::string name;
    double precision = 0.0;
    std::optional<double> recall;
    std::uint64_t support = 0;
};

struct EvalReport {
    std::string model;
    double accuracy = 0.0;
    double log_loss = 0.0;
    double macro_auc = 0.0;
    std::vector<ClassReport> classes;
    Confusion confusion;
    std::string metadata_json = "{}";  // free-form run metadata, a JSON object

    std::string to_json() const;
};

EvalReport evaluate(const Matrix& probs, std::span<const int> labels, const std::vector<std::string>& class_names,
                    const std::string& model_name);

/// w in {0, 0.05, ..., 1} minimising the mixture log loss on the given
/// (validation) predictions; the smallest such w on ties.
double calibrate_weight(const Matrix& p_cnn, const Matrix& p_gbdt, std::span<const int> labels);

/// Per-sample check of -log(w p + (1-w) q) <= -w log p - (1-w) log q at the true class.
bool jensen_bound_holds(const Matrix& p_cnn, const Matrix& p_gbdt, std::span<const int> labels, double w_cnn);

}  // namespace afen::metrics
