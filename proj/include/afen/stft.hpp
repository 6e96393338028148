#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afen/fft.hpp"
#include "afen/matrix.hpp"

namespace afen::dsp {

inline constexpr std::size_t kNfft = 2048;
inline constexpr std::size_t kHop = 512;

/// Frames produced by centred analysis: 1 + floor(n / hop).
constexpr std::size_t frame_count(std::size_t n, std::size_t hop) noexcept { return 1 + n / hop; }

/// One-sided complex spectrogram, bins x frames, column-major per frame.
struct ComplexSpectrogram {
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<cplx> data;  // frame-major: data[t * bins + k]

    cplx& at(std::size_t k, std::size_t t) noexcept { return data[t * bins + k]; }
    const cplx& at(std::size_t k, std::size_t t) const noexcept { return data[t * bins + k]; }
};

/// Centred STFT: the signal is reflect-padded by n_fft/2 on both sides and
/// frame t starts at t*hop in the padded signal. Periodic Hann analysis window.
ComplexSpectrogram stft(std::span<const float> signal, std::size_t n_fft = kNfft,
                        std::size_t hop = kHop);

/// |STFT| as a (n_fft/2 + 1) x frames matrix.
Matrix stft_magnitude(std::span<const float> signal, std::size_t n_fft = kNfft,
                      std::size_t hop = kHop);

/// Weighted overlap-add inverse of `stft` (Hann synthesis window, squared
/// window-sum normalisation); returns exactly `length` samples.
std::vector<double> istft(const ComplexSpectrogram& spec, std::size_t hop, std::size_t length);

/// Index into a reflect-padded signal of length n ("abcd" -> "dcb|abcd|cba").
std::size_t reflect_index(std::ptrdiff_t j, std::size_t n) noexcept;

}  // namespace afen::dsp
