#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "afen/nn/layers.hpp"
#include "afen/nn/tensor.hpp"
#include "afen/rng.hpp"

namespace afen::nn {

struct ConvBlockSpec {
    std::size_t filters = 32;
    std::size_t kh = 3, kw = 3;
    std::size_t sh = 1, sw = 1;
    std::size_t ph = 1, pw = 1;  // 1x1 = no pooling
};

/// Everything needed to rebuild a network before loading its weights.
struct ArchSpec {
    std::vector<std::size_t> branch_rows{40, 128, 12, 1, 1};  // one branch per feature kind
    std::size_t frames = 259;
    std::vector<ConvBlockSpec> blocks;
    std::vector<std::size_t> hidden{256, 128};
    std::size_t classes = 8;
    double dropout = 0.3;

    /// Five blocks: 32@5x5/(2,3), 64@3x3/(2,2), 96@2x2, 128@2x2, 128@2x2; 2x2 pools after the first two.
    static ArchSpec standard();
    /// The first two standard blocks at 8 and 16 filters and one 32-unit hidden
    /// layer; full-size inputs, for quick runs.
    static ArchSpec compact();
    /// Two blocks of 4 filters and a small head, for gradient checks and quick tests.
    static ArchSpec tiny(std::vector<std::size_t> rows, std::size_t frames);

    std::size_t branch_width() const { return blocks.empty() ? 1 : blocks.back().filters; }
    void validate() const;
    friend bool operator==(const ArchSpec&, const ArchSpec&);
};

bool operator==(const ConvBlockSpec&, const ConvBlockSpec&);

/// Output shape (h, w, c) after each block of one branch, pools included.
std::vector<std::array<std::size_t, 3>> branch_shapes(const ArchSpec& arch, std::size_t rows);

/// conv blocks -> self-attention -> global max pool, on a (b, rows, frames, 1) input.
/// The input is standardised per row with stored statistics first.
template <typename T>
class Branch {
public:
    Branch() = default;
    Branch(const std::string& name, const ArchSpec& arch, std::size_t rows);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    void backward(const Tensor<T>& dy);
    void collect(std::vector<Param<T>*>& out);
    void collect_buffers(std::vector<Buffer<T>*>& out);

    std::size_t rows = 0;
    Buffer<T> input_mean, input_scale;  // y = (x - mean) * scale, per row
    std::vector<Conv2d<T>> convs;
    std::vector<BatchNorm<T>> norms;
    std::vector<Relu<T>> relus;
    std::vector<MaxPool<T>> pools;
    SelfAttention<T> attention;
    GlobalMaxPool<T> gmp;
};

template <typename T>
class CnnModel {
public:
    CnnModel() = default;
    explicit CnnModel(ArchSpec arch);

    /// He-uniform conv/dense weights, Glorot attention projections, gamma_att = 0.
    void init(std::uint64_t seed);

    /// One (b, rows_i, frames, 1) tensor per branch -> class probabilities (b, 1, 1, classes).
    /// Dropout masks are drawn from `rng` in Train mode only.
    Tensor<T> forward(const std::vector<Tensor<T>>& inputs, Mode mode, Rng& rng);
    Tensor<T> forward(const std::vector<Tensor<T>>& inputs);  // Infer

    /// Accumulates gradients of the mean cross-entropy of the last forward's probabilities.
    void backward(const Tensor<T>& probs, std::span<const int> labels);

    std::vector<Param<T>*> parameters();
    std::vector<Buffer<T>*> buffers();
    void zero_grad();

    /// Pooled 128-wide output of branch i from the last forward.
    const Tensor<T>& branch_output(std::size_t i) const { return branch_out_[i]; }

    void set_dropout(double rate);

    const ArchSpec& arch() const noexcept { return arch_; }
    std::vector<Branch<T>> branches;
    std::vector<Dropout<T>> dropouts;
    std::vector<Dense<T>> dense;
    std::vector<Relu<T>> relus;

private:
    ArchSpec arch_;
    std::vector<Tensor<T>> branch_out_;
};

extern template class Branch<float>;
extern template class Branch<double>;
extern template class CnnModel<float>;
extern template class CnnModel<double>;

}  // namespace afen::nn
