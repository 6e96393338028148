#include "afen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "afen/error.hpp"
#include "afen/gbdt.hpp"

namespace afen::metrics {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw Error(Errc::ShapeMismatch, "probability matrices differ in shape");
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows)
        throw Error(Errc::ShapeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= classes)
            throw Error(Errc::LabelOutOfRange, "label " + std::to_string(l));
}

}  // namespace

Matrix soft_vote(const Matrix& p_cnn, const Matrix& p_gbdt, double w_cnn) {
    if (!(w_cnn >= 0.0 && w_cnn <= 1.0))
        throw Error(Errc::WeightOutOfRange, "ensemble weight " + std::to_string(w_cnn) + " outside [0, 1]");
    check_same_shape(p_cnn, p_gbdt);
    Matrix out(p_cnn.rows, p_cnn.cols);
    const double w_gbdt = 1.0 - w_cnn;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = w_cnn * p_cnn.data[i] + w_gbdt * p_gbdt.data[i];
    return out;
}

std::vector<int> argmax_rows(const Matrix& probs) {
    std::vector<int> out(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < probs.cols; ++k)
            if (probs(i, k) > probs(i, best)) best = k;
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::uint64_t Confusion::total() const noexcept { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t Confusion::support(std::size_t t) const noexcept {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < classes; ++p) s += (*this)(t, p);
    return s;
}

Confusion confusion_matrix(std::span<const int> predicted, std::span<const int> truth, std::size_t classes) {
    check_labels(predicted, truth.size(), classes);
    check_labels(truth, truth.size(), classes);
    Confusion c(classes);
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++c(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
    return c;
}

std::vector<PrecisionRecall> precision_recall(const Confusion& c) {
    std::vector<PrecisionRecall> out(c.classes);
    for (std::size_t k = 0; k < c.classes; ++k) {
        const std::uint64_t tp = c(k, k);
        std::uint64_t predicted = 0;
        for (std::size_t t = 0; t < c.classes; ++t) predicted += c(t, k);
        const std::uint64_t support = c.support(k);
        out[k].support = support;
        out[k].precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        if (support) out[k].recall = static_cast<double>(tp) / static_cast<double>(support);
    }
    return out;
}

std::vector<std::optional<double>> auc_per_class(const Matrix& probs, std::span<const int> labels) {
    check_labels(labels, probs.rows, probs.cols);
    const std::size_t n = probs.rows;
    std::vector<std::optional<double>> out(probs.cols);
    std::vector<std::size_t> order(n);
    std::vector<double> rank(n);
    for (std::size_t k = 0; k < probs.cols; ++k) {
        std::size_t pos = 0;
        for (int l : labels) pos += static_cast<std::size_t>(l) == k;
        const std::size_t neg = n - pos;
        if (pos == 0 || neg == 0) continue;

        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return probs(a, k) < probs(b, k); });
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && probs(order[j + 1], k) == probs(order[i], k)) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based mean rank of the tie group
            for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
            i = j + 1;
        }
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (static_cast<std::size_t>(labels[i]) == k) rank_sum += rank[i];
        const double p = static_cast<double>(pos), q = static_cast<double>(neg);
        out[k] = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
    }
    return out;
}

double macro_auc_ovr(const Matrix& probs, std::span<const int> labels) {
    check_labels(labels, probs.rows, probs.cols);
    std::vector<int> present(labels.begin(), labels.end());
    std::sort(present.begin(), present.end());
    if (std::unique(present.begin(), present.end()) - present.begin() < 2)
        throw Error(Errc::DegenerateLabels, "AUC needs at least two classes among the labels");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& a : auc_per_class(probs, labels))
        if (a) {
            sum += *a;
            ++count;
        }
    return sum / static_cast<double>(count);
}

EvalReport evaluate(const Matrix& probs, std::span<const int> labels, const std::vector<std::string>& class_names,
                    const std::string& model_name) {
    if (class_names.size() != probs.cols)
        throw Error(Errc::ShapeMismatch, std::to_string(class_names.size()) + " class names for " +
                                             std::to_string(probs.cols) + " probability columns");
    check_labels(labels, probs.rows, probs.cols);
    if (probs.rows == 0) throw Error(Errc::EmptyDataset, "nothing to evaluate");

    EvalReport r;
    r.model = model_name;
    const auto pred = argmax_rows(probs);
    r.confusion = confusion_matrix(pred, labels, probs.cols);
    std::uint64_t trace = 0;
    for (std::size_t k = 0; k < probs.cols; ++k) trace += r.confusion(k, k);
    r.accuracy = static_cast<double>(trace) / static_cast<double>(probs.rows);
    r.log_loss = gbdt::mlogloss(probs, labels);
    r.macro_auc = macro_auc_ovr(probs, labels);
    const auto pr = precision_recall(r.confusion);
    for (std::size_t k = 0; k < probs.cols; ++k) r.classes.push_back({class_names[k], pr[k].precision, pr[k].recall, pr[k].support});
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["accuracy"] = accuracy;
    j["log_loss"] = log_loss;
    j["macro_auc"] = macro_auc;
    auto& cls = j["classes"] = nlohmann::ordered_json::array();
    for (const auto& c : classes) {
        nlohmann::ordered_json e;
        e["name"] = c.name;
        e["precision"] = c.precision;
        e["recall"] = c.recall ? nlohmann::ordered_json(*c.recall) : nlohmann::ordered_json(nullptr);
        e["support"] = c.support;
        cls.push_back(std::move(e));
    }
    auto& conf = j["confusion"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < confusion.classes; ++t) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < confusion.classes; ++p) row.push_back(confusion(t, p));
        conf.push_back(std::move(row));
    }
    j["metadata"] = nlohmann::ordered_json::parse(metadata_json);
    return j.dump(2) + "\n";
}

double calibrate_weight(const Matrix& p_cnn, const Matrix& p_gbdt, std::span<const int> labels) {
    check_same_shape(p_cnn, p_gbdt);
    double best_w = 0.0, best_loss = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 20; ++step) {
        const double w = step / 20.0;
        const double loss = gbdt::mlogloss(soft_vote(p_cnn, p_gbdt, w), labels);
        if (loss < best_loss) {
            best_loss = loss;
            best_w = w;
        }
    }
    return best_w;
}

bool jensen_bound_holds(const Matrix& p_cnn, const Matrix& p_gbdt, std::span<const int> labels, double w_cnn) {
    check_same_shape(p_cnn, p_gbdt);
    check_labels(labels, p_cnn.rows, p_cnn.cols);
    auto nll = [](double p) { return -std::log(std::max(p, 1e-15)); };
    for (std::size_t i = 0; i < p_cnn.rows; ++i) {
        const auto k = static_cast<std::size_t>(labels[i]);
        const double a = p_cnn(i, k), b = p_gbdt(i, k);
        const double mixed = nll(w_cnn * a + (1.0 - w_cnn) * b);
        const double bound = w_cnn * nll(a) + (1.0 - w_cnn) * nll(b);
        if (mixed > bound + 1e-12 * std::max(1.0, bound)) return false;
    }
    return true;
}

}  // namespace afen::metrics
