#include "afen/stft.hpp"

#include <cmath>

#include "afen/error.hpp"

namespace afen::dsp {

std::size_t reflect_index(std::ptrdiff_t j, std::size_t n) noexcept {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (last <= 0) return 0;
    const std::ptrdiff_t period = 2 * last;
    j %= period;
    if (j < 0) j += period;
    return static_cast<std::size_t>(j <= last ? j : period - j);
}

ComplexSpectrogram stft(std::span<const float> signal, std::size_t n_fft, std::size_t hop) {
    if (signal.empty()) throw Error(Errc::EmptyClip, "stft of an empty signal");
    if (hop == 0) throw Error(Errc::InvalidArgument, "hop must be positive");
    const FftPlan plan(n_fft);
    const auto window = hann_window(n_fft);
    const auto pad = static_cast<std::ptrdiff_t>(n_fft / 2);

    ComplexSpectrogram spec;
    spec.bins = n_fft / 2 + 1;
    spec.frames = frame_count(signal.size(), hop);
    spec.data.resize(spec.bins * spec.frames);

    std::vector<cplx> buf(n_fft);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const auto start = static_cast<std::ptrdiff_t>(t * hop) - pad;
        for (std::size_t i = 0; i < n_fft; ++i) {
            const auto src = reflect_index(start + static_cast<std::ptrdiff_t>(i), signal.size());
            buf[i] = cplx(signal[src] * window[i], 0.0);
        }
        plan.forward(buf);
        for (std::size_t k = 0; k < spec.bins; ++k) spec.at(k, t) = buf[k];
    }
    return spec;
}

Matrix stft_magnitude(std::span<const float> signal, std::size_t n_fft, std::size_t hop) {
    const auto spec = stft(signal, n_fft, hop);
    Matrix mag(spec.bins, spec.frames);
    for (std::size_t t = 0; t < spec.frames; ++t)
        for (std::size_t k = 0; k < spec.bins; ++k) mag(k, t) = std::abs(spec.at(k, t));
    return mag;
}

std::vector<double> istft(const ComplexSpectrogram& spec, std::size_t hop, std::size_t length) {
    const std::size_t n_fft = 2 * (spec.bins - 1);
    const FftPlan plan(n_fft);
    const auto window = hann_window(n_fft);
    const std::size_t pad = n_fft / 2;
    const std::size_t total = std::max(length + 2 * pad, (spec.frames - 1) * hop + n_fft);

    std::vector<double> acc(total, 0.0);
    std::vector<double> wsum(total, 0.0);
    std::vector<cplx> buf(n_fft);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        for (std::size_t k = 0; k < spec.bins; ++k) buf[k] = spec.at(k, t);
        for (std::size_t k = spec.bins; k < n_fft; ++k) buf[k] = std::conj(buf[n_fft - k]);
        plan.inverse(buf);
        const std::size_t start = t * hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            acc[start + i] += buf[i].real() * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    std::vector<double> out(length, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        const double w = wsum[i + pad];
        out[i] = w > 1e-8 ? acc[i + pad] / w : 0.0;
    }
    return out;
}

}  // namespace afen::dsp
