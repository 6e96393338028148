#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace afen::dsp {

using cplx = std::complex<double>;

/// Iterative radix-2 FFT with precomputed twiddles and bit-reversal table.
/// A plan is immutable after construction and safe to share across threads.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);

    std::size_t size() const noexcept { return n_; }

    /// In-place forward transform, X[k] = sum_n x[n] e^{-2 pi i k n / N}.
    void forward(std::span<cplx> data) const;
    /// In-place inverse transform including the 1/N factor.
    void inverse(std::span<cplx> data) const;

private:
    void transform(std::span<cplx> data, bool inverse) const;

    std::size_t n_;
    std::vector<std::size_t> bitrev_;
    std::vector<cplx> twiddle_;  // e^{-2 pi i k / N}, k < N/2
};

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / N).
std::vector<double> hann_window(std::size_t n);

}  // namespace afen::dsp
