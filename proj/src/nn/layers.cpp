#include "afen/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "afen/error.hpp"
#include "afen/nn/gemm.hpp"

namespace afen::nn {

std::string shape_string(const std::array<std::size_t, 4>& dims) {
    return "(" + std::to_string(dims[0]) + ", " + std::to_string(dims[1]) + ", " + std::to_string(dims[2]) +
           ", " + std::to_string(dims[3]) + ")";
}

namespace {

template <typename T>
void fill_uniform(std::vector<T>& v, double limit, Rng& rng) {
    for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
}

std::size_t same_pad_before(std::size_t in, std::size_t out, std::size_t k, std::size_t s) {
    const auto needed = static_cast<std::ptrdiff_t>((out - 1) * s + k) - static_cast<std::ptrdiff_t>(in);
    return needed > 0 ? static_cast<std::size_t>(needed / 2) : 0;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kh_,
                  std::size_t kw_, std::size_t sh_, std::size_t sw_)
    : weight(name + ".weight", {kh_, kw_, in_channels, filters}),
      bias(name + ".bias", {filters}),
      cin(in_channels), cout(filters), kh(kh_), kw(kw_), sh(sh_), sw(sw_) {
    if (filters == 0 || kh_ == 0 || kw_ == 0 || sh_ == 0 || sw_ == 0 || in_channels == 0)
        throw Error(Errc::InvalidArgument, name + ": conv dimensions must be positive");
}

template <typename T>
void Conv2d<T>::init_he_uniform(Rng& rng) {
    fill_uniform(weight.value, std::sqrt(6.0 / static_cast<double>(kh * kw * cin)), rng);
    std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <typename T>
void Conv2d<T>::im2col(const T* x, T* col, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
                       std::size_t pad_t, std::size_t pad_l) const {
    const std::size_t cols = kh * kw * cin;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* row = col + (oy * ow + ox) * cols;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(pad_t);
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * sw + kx) - static_cast<std::ptrdiff_t>(pad_l);
                    T* dst = row + (ky * kw + kx) * cin;
                    if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) {
                        std::fill(dst, dst + cin, T(0));
                    } else {
                        const T* src = x + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                        std::copy(src, src + cin, dst);
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
    if (x.channels() != cin)
        throw Error(Errc::ShapeMismatch, weight.name + ": input " + shape_string(x.dims) + " has " +
                                             std::to_string(x.channels()) + " channels, expected " +
                                             std::to_string(cin));
    input_ = x;
    const std::size_t h = x.height(), w = x.width();
    const std::size_t oh = out_size(h, sh), ow = out_size(w, sw);
    const std::size_t pad_t = same_pad_before(h, oh, kh, sh), pad_l = same_pad_before(w, ow, kw, sw);
    const std::size_t rows = oh * ow, cols = kh * kw * cin;

    Tensor<T> y(x.batch(), oh, ow, cout);
    std::vector<T> col(rows * cols);
    for (std::size_t b = 0; b < x.batch(); ++b) {
        im2col(x.sample(b).data(), col.data(), h, w, oh, ow, pad_t, pad_l);
        T* out = y.sample(b).data();
        gemm_nn(rows, cout, cols, col.data(), weight.value.data(), out, false);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) out[r * cout + c] += bias.value[c];
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
    const std::size_t h = input_.height(), w = input_.width();
    const std::size_t oh = dy.height(), ow = dy.width();
    const std::size_t pad_t = same_pad_before(h, oh, kh, sh), pad_l = same_pad_before(w, ow, kw, sw);
    const std::size_t rows = oh * ow, cols = kh * kw * cin;

    Tensor<T> dx;
    std::vector<T> wt;
    if (propagate_input_grad) {
        dx = Tensor<T>(input_.batch(), h, w, cin);
        wt.resize(cols * cout);
        transpose(cols, cout, weight.value.data(), wt.data());
    }
    std::vector<T> col(rows * cols), dcol;
    if (propagate_input_grad) dcol.resize(rows * cols);

    for (std::size_t b = 0; b < input_.batch(); ++b) {
        const T* g = dy.sample(b).data();
        im2col(input_.sample(b).data(), col.data(), h, w, oh, ow, pad_t, pad_l);
        gemm_tn_acc(cols, cout, rows, col.data(), g, weight.grad.data());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) bias.grad[c] += g[r * cout + c];
        if (!propagate_input_grad) continue;

        gemm_nn(rows, cols, cout, g, wt.data(), dcol.data(), false);
        T* dxs = dx.sample(b).data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const T* row = dcol.data() + (oy * ow + ox) * cols;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(pad_t);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * sw + kx) - static_cast<std::ptrdiff_t>(pad_l);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        T* dst = dxs + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                        const T* src = row + (ky * kw + kx) * cin;
                        for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
    return dx;
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean{name + ".running_mean", std::vector<T>(channels, T(0))},
      running_var{name + ".running_var", std::vector<T>(channels, T(1))} {
    std::fill(gamma.value.begin(), gamma.value.end(), T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
    const std::size_t c = gamma.value.size();
    if (x.channels() != c) throw Error(Errc::ShapeMismatch, gamma.name + ": channel count mismatch");
    mode_ = mode;
    const std::size_t n = x.size() / c;
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    if (mode == Mode::Train) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) mean[j] += x.data[i * c + j];
        for (auto& m : mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double d = x.data[i * c + j] - mean[j];
                var[j] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(n);
        for (std::size_t j = 0; j < c; ++j) {
            running_mean.value[j] = static_cast<T>(kMomentum * running_mean.value[j] + (1.0 - kMomentum) * mean[j]);
            running_var.value[j] = static_cast<T>(kMomentum * running_var.value[j] + (1.0 - kMomentum) * var[j]);
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            mean[j] = running_mean.value[j];
            var[j] = running_var.value[j];
        }
    }
    inv_std_.resize(c);
    for (std::size_t j = 0; j < c; ++j) inv_std_[j] = 1.0 / std::sqrt(var[j] + kEps);

    xhat_ = Tensor<T>(x.batch(), x.height(), x.width(), c);
    Tensor<T> y(x.batch(), x.height(), x.width(), c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const T xh = static_cast<T>((x.data[i * c + j] - mean[j]) * inv_std_[j]);
            xhat_.data[i * c + j] = xh;
            y.data[i * c + j] = gamma.value[j] * xh + beta.value[j];
        }
    return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
    const std::size_t c = gamma.value.size();
    const std::size_t n = dy.size() / c;
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            sum_dy[j] += dy.data[i * c + j];
            sum_dy_xhat[j] += static_cast<double>(dy.data[i * c + j]) * xhat_.data[i * c + j];
        }
    for (std::size_t j = 0; j < c; ++j) {
        gamma.grad[j] += static_cast<T>(sum_dy_xhat[j]);
        beta.grad[j] += static_cast<T>(sum_dy[j]);
    }
    Tensor<T> dx(dy.batch(), dy.height(), dy.width(), c);
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double g = gamma.value[j] * inv_std_[j];
            if (mode_ == Mode::Train) {
                dx.data[i * c + j] = static_cast<T>(
                    g * (dy.data[i * c + j] - sum_dy[j] / nd - xhat_.data[i * c + j] * sum_dy_xhat[j] / nd));
            } else {
                dx.data[i * c + j] = static_cast<T>(g * dy.data[i * c + j]);
            }
        }
    return dx;
}

// ------------------------------------------------------------------ Relu

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    active_.resize(x.size());
    T* __restrict py = y.data.data();
    std::uint8_t* __restrict mask = active_.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool on = py[i] > T(0);
        mask[i] = on;
        py[i] = on ? py[i] : T(0);
    }
    return y;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    T* __restrict pd = dx.data.data();
    const std::uint8_t* __restrict mask = active_.data();
    for (std::size_t i = 0; i < dx.size(); ++i) pd[i] = mask[i] ? pd[i] : T(0);
    return dx;
}

// --------------------------------------------------------------- MaxPool

template <typename T>
Tensor<T> MaxPool<T>::forward(const Tensor<T>& x) {
    in_dims_ = x.dims;
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    const std::size_t eh = h < ph ? 1 : ph;
    const std::size_t ew = w < pw ? 1 : pw;
    const std::size_t oh = (h + eh - 1) / eh, ow = (w + ew - 1) / ew;
    Tensor<T> y(x.batch(), oh, ow, c);
    argmax_.assign(y.size(), 0);
    for (std::size_t b = 0; b < x.batch(); ++b)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t out_base = y.index(b, oy, ox, 0);
                const std::size_t y0 = oy * eh, x0 = ox * ew;
                const std::size_t y1 = std::min(h, y0 + eh), x1 = std::min(w, x0 + ew);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    std::size_t best = x.index(b, y0, x0, ch);
                    for (std::size_t iy = y0; iy < y1; ++iy)
                        for (std::size_t ix = x0; ix < x1; ++ix) {
                            const std::size_t i = x.index(b, iy, ix, ch);
                            if (x.data[i] > x.data[best]) best = i;
                        }
                    argmax_[out_base + ch] = best;
                    y.data[out_base + ch] = x.data[best];
                }
            }
    return y;
}

template <typename T>
Tensor<T> MaxPool<T>::backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
    return dx;
}

// --------------------------------------------------------- SelfAttention

template <typename T>
SelfAttention<T>::SelfAttention(std::string name, std::size_t c)
    : wq(name + ".wq", {c, c}), wk(name + ".wk", {c, c}), wv(name + ".wv", {c, c}),
      gamma(name + ".gamma", {1}), channels(c) {}

template <typename T>
void SelfAttention<T>::init_glorot_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(2 * channels));
    fill_uniform(wq.value, limit, rng);
    fill_uniform(wk.value, limit, rng);
    fill_uniform(wv.value, limit, rng);
    gamma.value[0] = T(0);
}

template <typename T>
Tensor<T> SelfAttention<T>::forward(const Tensor<T>& x) {
    if (x.channels() != channels) throw Error(Errc::ShapeMismatch, wq.name + ": channel count mismatch");
    input_ = x;
    const std::size_t l = x.height() * x.width(), c = channels, nb = x.batch();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
    q_.resize(nb * l * c);
    k_.resize(nb * l * c);
    v_.resize(nb * l * c);
    attn_.resize(nb * l * l);
    context_.resize(nb * l * c);
    std::vector<T> kt(c * l);
    Tensor<T> y = x;
    for (std::size_t b = 0; b < nb; ++b) {
        const T* xs = x.sample(b).data();
        T* q = q_.data() + b * l * c;
        T* k = k_.data() + b * l * c;
        T* v = v_.data() + b * l * c;
        T* a = attn_.data() + b * l * l;
        T* o = context_.data() + b * l * c;
        gemm_nn(l, c, c, xs, wq.value.data(), q, false);
        gemm_nn(l, c, c, xs, wk.value.data(), k, false);
        gemm_nn(l, c, c, xs, wv.value.data(), v, false);
        transpose(l, c, k, kt.data());
        gemm_nn(l, l, c, q, kt.data(), a, false);
        for (std::size_t i = 0; i < l; ++i) {
            T* row = a + i * l;
            T peak = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < l; ++j) {
                row[j] *= scale;
                peak = std::max(peak, row[j]);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < l; ++j) {
                row[j] = std::exp(row[j] - peak);
                total += row[j];
            }
            const T inv = static_cast<T>(1.0 / total);
            for (std::size_t j = 0; j < l; ++j) row[j] *= inv;
        }
        gemm_nn(l, c, l, a, v, o, false);
        T* ys = y.sample(b).data();
        const T g = gamma.value[0];
        for (std::size_t i = 0; i < l * c; ++i) ys[i] += g * o[i];
    }
    return y;
}

template <typename T>
Tensor<T> SelfAttention<T>::backward(const Tensor<T>& dy) {
    const std::size_t l = input_.height() * input_.width(), c = channels, nb = input_.batch();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
    const T g = gamma.value[0];
    Tensor<T> dx = dy;
    std::vector<T> d_ctx(l * c), vt(c * l), d_attn(l * l), dq(l * c), dk(l * c), dv(l * c);
    std::vector<T> wqt(c * c), wkt(c * c), wvt(c * c);
    transpose(c, c, wq.value.data(), wqt.data());
    transpose(c, c, wk.value.data(), wkt.data());
    transpose(c, c, wv.value.data(), wvt.data());
    double dgamma = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        const T* xs = input_.sample(b).data();
        const T* gy = dy.sample(b).data();
        const T* q = q_.data() + b * l * c;
        const T* k = k_.data() + b * l * c;
        const T* v = v_.data() + b * l * c;
        const T* a = attn_.data() + b * l * l;
        const T* o = context_.data() + b * l * c;
        for (std::size_t i = 0; i < l * c; ++i) {
            dgamma += static_cast<double>(gy[i]) * o[i];
            d_ctx[i] = g * gy[i];
        }
        transpose(l, c, v, vt.data());
        gemm_nn(l, l, c, d_ctx.data(), vt.data(), d_attn.data(), false);
        std::fill(dv.begin(), dv.end(), T(0));
        gemm_tn_acc(l, c, l, a, d_ctx.data(), dv.data());
        for (std::size_t i = 0; i < l; ++i) {
            const T* arow = a + i * l;
            T* drow = d_attn.data() + i * l;
            double dot = 0.0;
            for (std::size_t j = 0; j < l; ++j) dot += static_cast<double>(drow[j]) * arow[j];
            for (std::size_t j = 0; j < l; ++j) drow[j] = static_cast<T>(arow[j] * (drow[j] - dot)) * scale;
        }
        gemm_nn(l, c, l, d_attn.data(), k, dq.data(), false);
        std::fill(dk.begin(), dk.end(), T(0));
        gemm_tn_acc(l, c, l, d_attn.data(), q, dk.data());
        gemm_tn_acc(c, c, l, xs, dq.data(), wq.grad.data());
        gemm_tn_acc(c, c, l, xs, dk.data(), wk.grad.data());
        gemm_tn_acc(c, c, l, xs, dv.data(), wv.grad.data());
        T* dxs = dx.sample(b).data();
        gemm_nn(l, c, c, dq.data(), wqt.data(), dxs, true);
        gemm_nn(l, c, c, dk.data(), wkt.data(), dxs, true);
        gemm_nn(l, c, c, dv.data(), wvt.data(), dxs, true);
    }
    gamma.grad[0] += static_cast<T>(dgamma);
    return dx;
}

// --------------------------------------------------------- GlobalMaxPool

template <typename T>
Tensor<T> GlobalMaxPool<T>::forward(const Tensor<T>& x) {
    in_dims_ = x.dims;
    const std::size_t c = x.channels(), positions = x.height() * x.width();
    Tensor<T> y(x.batch(), 1, 1, c);
    argmax_.assign(y.size(), 0);
    for (std::size_t b = 0; b < x.batch(); ++b) {
        const std::size_t base = b * positions * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::size_t best = base + ch;
            for (std::size_t p = 1; p < positions; ++p) {
                const std::size_t i = base + p * c + ch;
                if (x.data[i] > x.data[best]) best = i;
            }
            argmax_[b * c + ch] = best;
            y.data[b * c + ch] = x.data[best];
        }
    }
    return y;
}

template <typename T>
Tensor<T> GlobalMaxPool<T>::backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
    return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::string name, std::size_t in_, std::size_t out_)
    : weight(name + ".weight", {in_, out_}), bias(name + ".bias", {out_}), in(in_), out(out_) {}

template <typename T>
void Dense<T>::init_he_uniform(Rng& rng) {
    fill_uniform(weight.value, std::sqrt(6.0 / static_cast<double>(in)), rng);
    std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
    if (x.sample_size() != in)
        throw Error(Errc::ShapeMismatch, weight.name + ": input width " + std::to_string(x.sample_size()) +
                                             ", expected " + std::to_string(in));
    input_ = x;
    Tensor<T> y(x.batch(), 1, 1, out);
    gemm_nn(x.batch(), out, in, x.data.data(), weight.value.data(), y.data.data(), false);
    for (std::size_t b = 0; b < x.batch(); ++b)
        for (std::size_t j = 0; j < out; ++j) y.data[b * out + j] += bias.value[j];
    return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
    const std::size_t nb = input_.batch();
    gemm_tn_acc(in, out, nb, input_.data.data(), dy.data.data(), weight.grad.data());
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t j = 0; j < out; ++j) bias.grad[j] += dy.data[b * out + j];
    std::vector<T> wt(out * in);
    transpose(in, out, weight.value.data(), wt.data());
    Tensor<T> dx(input_.dims[0], input_.dims[1], input_.dims[2], input_.dims[3]);
    gemm_nn(nb, in, out, dy.data.data(), wt.data(), dx.data.data(), false);
    return dx;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
    scale_.clear();
    if (mode == Mode::Infer || rate <= 0.0) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    scale_.resize(x.size());
    Tensor<T> y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        scale_[i] = rng.uniform() >= rate ? keep_scale : T(0);
        y.data[i] *= scale_[i];
    }
    return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) const {
    if (scale_.empty()) return dy;
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= scale_[i];
    return dx;
}

// ------------------------------------------------------- softmax / loss

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> p = logits;
    const std::size_t k = logits.sample_size();
    for (std::size_t b = 0; b < logits.batch(); ++b) {
        auto row = p.sample(b);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        std::vector<double> e(k);
        for (std::size_t j = 0; j < k; ++j) total += e[j] = std::exp(static_cast<double>(row[j]) - peak);
        for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<T>(e[j] / total);
    }
    return p;
}

template <typename T>
double sparse_xent_loss(const Tensor<T>& probs, std::span<const int> labels) {
    if (labels.size() != probs.batch())
        throw Error(Errc::ShapeMismatch, "label count differs from batch size");
    const std::size_t k = probs.sample_size();
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k)
            throw Error(Errc::LabelOutOfRange, "label " + std::to_string(labels[b]));
        total -= std::log(std::max(static_cast<double>(probs.data[b * k + static_cast<std::size_t>(labels[b])]), 1e-12));
    }
    return total / static_cast<double>(labels.size());
}

#define AFEN_INSTANTIATE(T)                                                     \
    template class Conv2d<T>;                                                   \
    template class BatchNorm<T>;                                                \
    template class Relu<T>;                                                     \
    template class MaxPool<T>;                                                  \
    template class SelfAttention<T>;                                            \
    template class GlobalMaxPool<T>;                                            \
    template class Dense<T>;                                                    \
    template class Dropout<T>;                                                  \
    template Tensor<T> softmax<T>(const Tensor<T>&);                            \
    template double sparse_xent_loss<T>(const Tensor<T>&, std::span<const int>);

AFEN_INSTANTIATE(float)
AFEN_INSTANTIATE(double)

#undef AFEN_INSTANTIATE

}  // namespace afen::nn
