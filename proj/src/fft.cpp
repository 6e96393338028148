#include "afen/fft.hpp"

#include <cmath>
#include <numbers>

#include "afen/error.hpp"

namespace afen::dsp {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (!is_power_of_two(n)) throw Error(Errc::InvalidArgument, "FFT size must be a power of two");
    bitrev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b)
            if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = {std::cos(a), std::sin(a)};
    }
}

void FftPlan::transform(std::span<cplx> data, bool inverse) const {
    if (data.size() != n_) throw Error(Errc::ShapeMismatch, "FFT buffer size differs from plan");
    for (std::size_t i = 0; i < n_; ++i)
        if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n_ / len;
        for (std::size_t start = 0; start < n_; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                cplx w = twiddle_[j * step];
                if (inverse) w = std::conj(w);
                const cplx u = data[start + j];
                const cplx v = data[start + j + half] * w;
                data[start + j] = u + v;
                data[start + j + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n_);
        for (auto& x : data) x *= s;
    }
}

void FftPlan::forward(std::span<cplx> data) const { transform(data, false); }
void FftPlan::inverse(std::span<cplx> data) const { transform(data, true); }

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

}  // namespace afen::dsp
