#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "afen/features.hpp"
#include "afen/matrix.hpp"
#include "afen/nn/model.hpp"
#include "afen/nn/optimizer.hpp"

namespace afen::nn {

/// Network inputs held per sample as the branch matrices laid end to end
/// (rows_i x frames each, row-major).
struct CnnData {
    std::vector<std::size_t> branch_rows;
    std::size_t frames = 0;
    std::vector<std::vector<float>> inputs;
    std::vector<int> labels;

    CnnData() = default;
    CnnData(std::vector<std::size_t> rows, std::size_t frames) : branch_rows(std::move(rows)), frames(frames) {}
    static CnnData for_arch(const ArchSpec& arch) { return CnnData(arch.branch_rows, arch.frames); }

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t sample_width() const noexcept;
    void add(std::vector<float> values, int label);
    /// Feature kinds in order MFCC, MEL, CSTFT, ROLLOFF, ZCR.
    void add(const features::FeatureBundle& bundle, int label);
};

/// One tensor per branch for the selected samples.
std::vector<Tensor<float>> make_batch(const CnnData& data, std::span<const std::size_t> indices);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double dropout = 0.3;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;  // carved from train by the dataset split; fit_cnn receives it ready-made
    OptimizerConfig optimizer;

    void validate() const;
};

struct HistoryRow {
    std::size_t epoch = 0;
    double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct FitResult {
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;
};

struct LossAccuracy {
    double loss = 0;
    double accuracy = 0;
};

/// Per-row mean and 1/std of every branch input over the training set.
void fit_input_normalization(CnnModel<float>& model, const CnnData& train);

/// Mini-batch training. Train columns are running averages over the epoch in
/// train mode; validation columns are infer mode (or NaN without a validation
/// set). The parameters from the epoch with the lowest validation loss (train
/// loss if there is no validation set) are restored at the end.
FitResult fit_cnn(CnnModel<float>& model, const CnnData& train, const CnnData& val, const TrainConfig& config);

/// Infer-mode class probabilities, one row per sample.
Matrix predict_proba(CnnModel<float>& model, const CnnData& data, std::size_t batch_size = 32);
LossAccuracy evaluate_cnn(CnnModel<float>& model, const CnnData& data);

std::string history_csv(const std::vector<HistoryRow>& history);

}  // namespace afen::nn
