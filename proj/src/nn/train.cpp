#include "afen/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "afen/error.hpp"

namespace afen::nn {

namespace {

std::size_t argmax(std::span<const float> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

struct Snapshot {
    std::vector<std::vector<float>> params, buffers;

    void take(CnnModel<float>& model) {
        params.clear();
        buffers.clear();
        for (auto* p : model.parameters()) params.push_back(p->value);
        for (auto* b : model.buffers()) buffers.push_back(b->value);
    }
    void restore(CnnModel<float>& model) const {
        auto ps = model.parameters();
        auto bs = model.buffers();
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = params[i];
        for (std::size_t i = 0; i < bs.size(); ++i) bs[i]->value = buffers[i];
    }
};

void check_compatible(const CnnModel<float>& model, const CnnData& data) {
    if (data.branch_rows != model.arch().branch_rows || data.frames != model.arch().frames)
        throw Error(Errc::ShapeMismatch, "data layout does not match the model's branch inputs");
}

}  // namespace

std::size_t CnnData::sample_width() const noexcept {
    return std::accumulate(branch_rows.begin(), branch_rows.end(), std::size_t{0}) * frames;
}

void CnnData::add(std::vector<float> values, int label) {
    if (values.size() != sample_width())
        throw Error(Errc::ShapeMismatch, "sample has " + std::to_string(values.size()) + " values, expected " +
                                             std::to_string(sample_width()));
    inputs.push_back(std::move(values));
    labels.push_back(label);
}

void CnnData::add(const features::FeatureBundle& bundle, int label) {
    if (branch_rows.size() != features::kAllKinds.size())
        throw Error(Errc::ShapeMismatch, "feature bundles need five branches");
    std::vector<float> values;
    values.reserve(sample_width());
    for (std::size_t i = 0; i < features::kAllKinds.size(); ++i) {
        const auto& m = bundle.matrices[i].values;
        if (m.rows != branch_rows[i] || m.cols != frames)
            throw Error(Errc::ShapeMismatch, "feature matrix " + std::to_string(i) + " has shape " +
                                                 std::to_string(m.rows) + "x" + std::to_string(m.cols));
        for (double v : m.data) values.push_back(static_cast<float>(v));
    }
    add(std::move(values), label);
}

std::vector<Tensor<float>> make_batch(const CnnData& data, std::span<const std::size_t> indices) {
    std::vector<Tensor<float>> out;
    std::size_t offset = 0;
    for (std::size_t rows : data.branch_rows) {
        Tensor<float> t(indices.size(), rows, data.frames, 1);
        const std::size_t n = rows * data.frames;
        for (std::size_t b = 0; b < indices.size(); ++b) {
            const auto& src = data.inputs.at(indices[b]);
            std::copy_n(src.data() + offset, n, t.sample(b).data());
        }
        out.push_back(std::move(t));
        offset += n;
    }
    return out;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, "cnn: " + m); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must be in [0, 1)");
    if (!(optimizer.learning_rate > 0.0)) fail("learning_rate must be > 0");
}

void fit_input_normalization(CnnModel<float>& model, const CnnData& train) {
    check_compatible(model, train);
    if (train.size() == 0) throw Error(Errc::EmptyDataset, "no training samples");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < train.branch_rows.size(); ++i) {
        auto& br = model.branches[i];
        const std::size_t rows = train.branch_rows[i];
        for (std::size_t r = 0; r < rows; ++r) {
            double sum = 0.0, sq = 0.0;
            for (const auto& s : train.inputs) {
                const float* p = s.data() + offset + r * train.frames;
                for (std::size_t t = 0; t < train.frames; ++t) sum += p[t];
            }
            const double count = static_cast<double>(train.size() * train.frames);
            const double mean = sum / count;
            for (const auto& s : train.inputs) {
                const float* p = s.data() + offset + r * train.frames;
                for (std::size_t t = 0; t < train.frames; ++t) sq += (p[t] - mean) * (p[t] - mean);
            }
            const double sd = std::sqrt(sq / count);
            br.input_mean.value[r] = static_cast<float>(mean);
            br.input_scale.value[r] = sd > 1e-8 ? static_cast<float>(1.0 / sd) : 1.0f;
        }
        offset += rows * train.frames;
    }
}

Matrix predict_proba(CnnModel<float>& model, const CnnData& data, std::size_t batch_size) {
    check_compatible(model, data);
    Matrix out(data.size(), model.arch().classes);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto probs = model.forward(make_batch(data, idx));
        for (std::size_t b = 0; b < idx.size(); ++b)
            for (std::size_t k = 0; k < out.cols; ++k) out(start + b, k) = probs.data[b * out.cols + k];
    }
    return out;
}

LossAccuracy evaluate_cnn(CnnModel<float>& model, const CnnData& data) {
    if (data.size() == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const Matrix p = predict_proba(model, data);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto label = static_cast<std::size_t>(data.labels[i]);
        if (label >= p.cols) throw Error(Errc::LabelOutOfRange, "label " + std::to_string(data.labels[i]));
        loss -= std::log(std::max(p(i, label), 1e-12));
        std::vector<float> row(p.cols);
        for (std::size_t k = 0; k < p.cols; ++k) row[k] = static_cast<float>(p(i, k));
        correct += argmax(row) == label;
    }
    const double n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

FitResult fit_cnn(CnnModel<float>& model, const CnnData& train, const CnnData& val, const TrainConfig& config) {
    config.validate();
    if (train.size() == 0) throw Error(Errc::EmptyDataset, "no training samples");
    check_compatible(model, train);
    if (val.size() > 0) check_compatible(model, val);

    model.set_dropout(config.dropout);
    fit_input_normalization(model, train);
    Optimizer<float> opt(config.optimizer);
    const auto params = model.parameters();

    FitResult result;
    Snapshot best;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train.size());

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = Rng::substream(config.seed, epoch);
        shuffle_rng.shuffle(order.begin(), order.end());
        Rng dropout_rng = Rng::substream(config.seed ^ 0x64726f706f7574ULL, epoch);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<int> labels(idx.size());
            for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = train.labels[idx[b]];

            model.zero_grad();
            const auto probs = model.forward(make_batch(train, idx), Mode::Train, dropout_rng);
            const double loss = sparse_xent_loss(probs, std::span<const int>(labels));
            if (!std::isfinite(loss)) throw Error(Errc::NumericFailure, "non-finite training loss at epoch " +
                                                                            std::to_string(epoch));
            model.backward(probs, labels);
            opt.step(params);

            loss_sum += loss * static_cast<double>(idx.size());
            for (std::size_t b = 0; b < idx.size(); ++b)
                correct += argmax(probs.sample(b)) == static_cast<std::size_t>(labels[b]);
        }

        HistoryRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train.size());
        row.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        const auto v = evaluate_cnn(model, val);
        row.val_loss = v.loss;
        row.val_acc = v.accuracy;
        result.history.push_back(row);

        const double score = val.size() > 0 ? row.val_loss : row.train_loss;
        if (score < best_loss) {
            best_loss = score;
            result.best_epoch = epoch;
            best.take(model);
        }
    }
    if (result.best_epoch > 0) best.restore(model);
    return result;
}

std::string history_csv(const std::vector<HistoryRow>& history) {
    std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_acc, r.val_loss,
                      r.val_acc);
        out += buf;
    }
    return out;
}

}  // namespace afen::nn
