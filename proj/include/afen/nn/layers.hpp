#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afen/nn/tensor.hpp"
#include "afen/rng.hpp"

namespace afen::nn {

// Every layer caches what its backward pass needs during forward(). backward()
// takes dL/d(output), accumulates parameter gradients (+=) and returns
// dL/d(input). A layer must see forward() before backward().

/// Same-padded 2-D cross-correlation, weights stored (kh, kw, cin, cout).
/// Output spatial size is ceil(in / stride).
template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kh, std::size_t kw,
           std::size_t sh, std::size_t sw);

    static std::size_t out_size(std::size_t in, std::size_t stride) noexcept { return (in + stride - 1) / stride; }

    void init_he_uniform(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(std::vector<Param<T>*>& out) { out.push_back(&weight); out.push_back(&bias); }

    /// Skip dL/dx when the input is raw data.
    bool propagate_input_grad = true;

    Param<T> weight, bias;
    std::size_t cin = 0, cout = 0, kh = 1, kw = 1, sh = 1, sw = 1;

private:
    void im2col(const T* x, T* col, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
                std::size_t pad_t, std::size_t pad_l) const;
    Tensor<T> input_;
};

/// Per-channel batch normalisation, eps 1e-5, running-stat momentum 0.9.
template <typename T>
class BatchNorm {
public:
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.9;

    BatchNorm() = default;
    BatchNorm(std::string name, std::size_t channels);

    Tensor<T> forward(const Tensor<T>& x, Mode mode);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(std::vector<Param<T>*>& out) { out.push_back(&gamma); out.push_back(&beta); }
    void collect_buffers(std::vector<Buffer<T>*>& out) { out.push_back(&running_mean); out.push_back(&running_var); }

    Param<T> gamma, beta;
    Buffer<T> running_mean, running_var;

private:
    Mode mode_ = Mode::Train;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
};

template <typename T>
class Relu {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy) const;

private:
    std::vector<std::uint8_t> active_;
};

/// Max pooling with stride = pool and ceil-mode partial windows. A pool
/// extent is clamped to 1 along any axis shorter than it.
template <typename T>
class MaxPool {
public:
    MaxPool() = default;
    MaxPool(std::size_t ph, std::size_t pw) : ph(ph), pw(pw) {}

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy) const;

    std::size_t ph = 1, pw = 1;

private:
    std::array<std::size_t, 4> in_dims_{};
    std::vector<std::size_t> argmax_;
};

/// Single-head scaled dot-product self-attention over the h*w positions with
/// a gated residual: y = x + gamma * softmax(Q K^T / sqrt(c)) V.
template <typename T>
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(std::string name, std::size_t channels);

    void init_glorot_uniform(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&wq);
        out.push_back(&wk);
        out.push_back(&wv);
        out.push_back(&gamma);
    }

    /// Attention weights of sample b from the last forward (L x L).
    std::span<const T> attention(std::size_t b) const {
        const std::size_t l = input_.height() * input_.width();
        return {attn_.data() + b * l * l, l * l};
    }

    Param<T> wq, wk, wv, gamma;
    std::size_t channels = 0;

private:
    Tensor<T> input_;
    std::vector<T> q_, k_, v_, attn_, context_;
};

/// Max over all spatial positions per channel: (b, h, w, c) -> (b, 1, 1, c).
template <typename T>
class GlobalMaxPool {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy) const;

private:
    std::array<std::size_t, 4> in_dims_{};
    std::vector<std::size_t> argmax_;
};

/// Fully connected layer on (b, 1, 1, in) tensors.
template <typename T>
class Dense {
public:
    Dense() = default;
    Dense(std::string name, std::size_t in, std::size_t out);

    void init_he_uniform(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(std::vector<Param<T>*>& out) { out.push_back(&weight); out.push_back(&bias); }

    Param<T> weight, bias;
    std::size_t in = 0, out = 0;

private:
    Tensor<T> input_;
};

/// Inverted dropout; identity in Infer mode or at rate 0.
template <typename T>
class Dropout {
public:
    Dropout() = default;
    explicit Dropout(double rate) : rate(rate) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng);
    Tensor<T> backward(const Tensor<T>& dy) const;

    double rate = 0.0;

private:
    std::vector<T> scale_;  // empty when the layer acted as identity
};

/// Row-wise softmax over the channel axis of a (b, 1, 1, k) tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean over the batch of -log(max(p[i, label_i], 1e-12)).
template <typename T>
double sparse_xent_loss(const Tensor<T>& probs, std::span<const int> labels);

}  // namespace afen::nn
