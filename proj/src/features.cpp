#include "afen/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "afen/error.hpp"

namespace afen::features {

namespace {

constexpr double kLogFloor = 1e-10;
constexpr double kChromaMinHz = 50.0;
constexpr double kSampleRate = audio::kStandardRate;

double bin_hz(std::size_t k) noexcept {
    return static_cast<double>(k) * kSampleRate / static_cast<double>(dsp::kNfft);
}

FeatureMatrix wrap(FeatureKind kind, Matrix m) {
    FeatureMatrix f{kind, std::move(m)};
    f.validate();
    return f;
}

}  // namespace

std::string_view kind_name(FeatureKind kind) noexcept {
    switch (kind) {
        case FeatureKind::Mfcc: return "mfcc";
        case FeatureKind::Mel: return "mel";
        case FeatureKind::Cstft: return "cstft";
        case FeatureKind::Rolloff: return "rolloff";
        case FeatureKind::Zcr: return "zcr";
    }
    return "?";
}

void FeatureMatrix::validate() const {
    const auto name = std::string(kind_name(kind));
    if (values.rows != kind_rows(kind) || values.cols != kFrames)
        throw Error(Errc::ShapeMismatch, name + " matrix is " + std::to_string(values.rows) + "x" +
                                             std::to_string(values.cols) + ", expected " +
                                             std::to_string(kind_rows(kind)) + "x" +
                                             std::to_string(kFrames));
    for (double v : values.data) {
        if (!std::isfinite(v)) throw Error(Errc::NumericFailure, name + " has a non-finite value");
        const bool ok = [&] {
            switch (kind) {
                case FeatureKind::Zcr: return v >= 0.0 && v <= 1.0;
                case FeatureKind::Rolloff: return v >= 0.0 && v <= kSampleRate / 2.0;
                case FeatureKind::Cstft:
                case FeatureKind::Mel: return v >= 0.0;
                case FeatureKind::Mfcc: return true;
            }
            return false;
        }();
        if (!ok) throw Error(Errc::NumericFailure, name + " value " + std::to_string(v) + " out of range");
    }
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges(std::size_t n_mels, double f_lo, double f_hi) {
    if (n_mels < 2) throw Error(Errc::InvalidArgument, "need at least two mel bands");
    const double m_lo = hz_to_mel(f_lo);
    const double m_hi = hz_to_mel(f_hi);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    return edges;
}

Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate, double f_lo, double f_hi) {
    const auto edges = mel_band_edges(n_mels, f_lo, f_hi);
    const std::size_t bins = n_fft / 2 + 1;
    Matrix fb(n_mels, bins);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
            const double rise = (f - lo) / (centre - lo);
            const double fall = (hi - f) / (hi - centre);
            fb(m, k) = std::max(0.0, std::min(rise, fall));
        }
    }
    return fb;
}

Matrix dct_matrix(std::size_t n_out, std::size_t n_in) {
    Matrix d(n_out, n_in);
    const double s0 = std::sqrt(1.0 / static_cast<double>(n_in));
    const double sk = std::sqrt(2.0 / static_cast<double>(n_in));
    for (std::size_t k = 0; k < n_out; ++k)
        for (std::size_t n = 0; n < n_in; ++n)
            d(k, n) = (k == 0 ? s0 : sk) *
                      std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                               (2.0 * static_cast<double>(n_in)));
    return d;
}

std::size_t pitch_class(double hz) noexcept {
    const long semis = std::lround(12.0 * std::log2(hz / 440.0));
    return static_cast<std::size_t>((((semis + 9) % 12) + 12) % 12);
}

FeatureExtractor::FeatureExtractor() : FeatureExtractor(Options{}) {}

FeatureExtractor::FeatureExtractor(Options options)
    : options_(options),
      filterbank_(mel_filterbank()),
      dct_(dct_matrix(kMfccCount, kMelBands)),
      chroma_of_bin_(kFftBins, -1) {
    if (!(options_.rolloff_pct > 0.0 && options_.rolloff_pct <= 1.0))
        throw Error(Errc::InvalidArgument, "rolloff percentage must lie in (0, 1]");
    filter_support_.resize(kMelBands);
    for (std::size_t m = 0; m < kMelBands; ++m) {
        std::size_t b = kFftBins, e = 0;
        for (std::size_t k = 0; k < kFftBins; ++k) {
            if (filterbank_(m, k) > 0.0) {
                b = std::min(b, k);
                e = k + 1;
            }
        }
        filter_support_[m] = b < e ? std::pair{b, e} : std::pair{std::size_t{0}, std::size_t{0}};
    }
    for (std::size_t k = 0; k < kFftBins; ++k)
        if (bin_hz(k) > kChromaMinHz) chroma_of_bin_[k] = static_cast<int>(pitch_class(bin_hz(k)));
}

Matrix FeatureExtractor::mel_power(const Matrix& magnitude) const {
    if (magnitude.rows != kFftBins) throw Error(Errc::ShapeMismatch, "magnitude needs 1025 rows");
    Matrix out(kMelBands, magnitude.cols);
    for (std::size_t m = 0; m < kMelBands; ++m) {
        const auto [b, e] = filter_support_[m];
        for (std::size_t t = 0; t < magnitude.cols; ++t) {
            double acc = 0.0;
            for (std::size_t k = b; k < e; ++k) {
                const double a = magnitude(k, t);
                acc += filterbank_(m, k) * a * a;
            }
            out(m, t) = acc;
        }
    }
    return out;
}

Matrix FeatureExtractor::log_mel(const Matrix& magnitude) const {
    Matrix p = mel_power(magnitude);
    for (double& v : p.data) v = std::log(std::max(v, kLogFloor));
    return p;
}

Matrix FeatureExtractor::mel_from_magnitude(const Matrix& magnitude) const {
    Matrix p = mel_power(magnitude);
    for (double& v : p.data) v = std::log1p(v);
    return p;
}

Matrix FeatureExtractor::mfcc_from_log_mel(const Matrix& log_mel) const {
    if (log_mel.rows != kMelBands) throw Error(Errc::ShapeMismatch, "log-mel needs 128 rows");
    Matrix out(kMfccCount, log_mel.cols);
    for (std::size_t k = 0; k < kMfccCount; ++k) {
        const auto basis = dct_.row(k);
        for (std::size_t t = 0; t < log_mel.cols; ++t) {
            double acc = 0.0;
            for (std::size_t n = 0; n < kMelBands; ++n) acc += basis[n] * log_mel(n, t);
            out(k, t) = acc;
        }
    }
    return out;
}

Matrix FeatureExtractor::chroma_from_magnitude(const Matrix& magnitude) const {
    if (magnitude.rows != kFftBins) throw Error(Errc::ShapeMismatch, "magnitude needs 1025 rows");
    Matrix out(kPitchClasses, magnitude.cols);
    for (std::size_t t = 0; t < magnitude.cols; ++t) {
        for (std::size_t k = 0; k < kFftBins; ++k)
            if (chroma_of_bin_[k] >= 0) out(static_cast<std::size_t>(chroma_of_bin_[k]), t) += magnitude(k, t);
        double peak = 0.0;
        for (std::size_t c = 0; c < kPitchClasses; ++c) peak = std::max(peak, out(c, t));
        if (peak > 0.0)
            for (std::size_t c = 0; c < kPitchClasses; ++c) out(c, t) /= peak;
    }
    return out;
}

Matrix FeatureExtractor::rolloff_from_magnitude(const Matrix& magnitude, double pct) const {
    Matrix out(1, magnitude.cols);
    std::vector<double> cumulative(magnitude.rows);
    for (std::size_t t = 0; t < magnitude.cols; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < magnitude.rows; ++k) {
            const double a = magnitude(k, t);
            acc += a * a;
            cumulative[k] = acc;
        }
        if (!(acc > 0.0)) continue;
        const double threshold = pct * acc;
        const auto it = std::find_if(cumulative.begin(), cumulative.end(),
                                     [&](double c) { return c >= threshold; });
        out(0, t) = bin_hz(static_cast<std::size_t>(it - cumulative.begin()));
    }
    return out;
}

FeatureMatrix FeatureExtractor::mel_spectrogram(const StandardClip& clip) const {
    return wrap(FeatureKind::Mel, mel_from_magnitude(stft_magnitude(clip)));
}

FeatureMatrix FeatureExtractor::mfcc(const StandardClip& clip) const {
    return wrap(FeatureKind::Mfcc, mfcc_from_log_mel(log_mel(stft_magnitude(clip))));
}

FeatureMatrix FeatureExtractor::chroma_stft(const StandardClip& clip) const {
    return wrap(FeatureKind::Cstft, chroma_from_magnitude(stft_magnitude(clip)));
}

FeatureMatrix FeatureExtractor::spectral_rolloff(const StandardClip& clip) const {
    return spectral_rolloff(clip, options_.rolloff_pct);
}

FeatureMatrix FeatureExtractor::spectral_rolloff(const StandardClip& clip, double pct) const {
    return wrap(FeatureKind::Rolloff, rolloff_from_magnitude(stft_magnitude(clip), pct));
}

FeatureMatrix FeatureExtractor::zero_crossing_rate(const StandardClip& clip) const {
    return wrap(FeatureKind::Zcr, features::zero_crossing_rate(clip.samples()));
}

FeatureBundle FeatureExtractor::extract(const StandardClip& clip) const {
    const Matrix mag = stft_magnitude(clip);
    FeatureBundle b;
    b[FeatureKind::Mfcc] = wrap(FeatureKind::Mfcc, mfcc_from_log_mel(log_mel(mag)));
    b[FeatureKind::Mel] = wrap(FeatureKind::Mel, mel_from_magnitude(mag));
    b[FeatureKind::Cstft] = wrap(FeatureKind::Cstft, chroma_from_magnitude(mag));
    b[FeatureKind::Rolloff] = wrap(FeatureKind::Rolloff, rolloff_from_magnitude(mag, options_.rolloff_pct));
    b[FeatureKind::Zcr] = wrap(FeatureKind::Zcr, features::zero_crossing_rate(clip.samples()));
    b.gbdt_vector = gbdt_feature_vector(b, options_.summary_minmax);
    return b;
}

const FeatureExtractor& default_extractor() {
    static const FeatureExtractor extractor;
    return extractor;
}

Matrix stft_magnitude(const StandardClip& clip) { return dsp::stft_magnitude(clip.samples()); }

Matrix zero_crossing_rate(std::span<const float> signal, std::size_t frame, std::size_t hop) {
    if (frame < 2) throw Error(Errc::InvalidArgument, "ZCR frame must hold at least two samples");
    const std::size_t frames = dsp::frame_count(signal.size(), hop);
    const auto pad = static_cast<std::ptrdiff_t>(frame / 2);
    Matrix out(1, frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto start = static_cast<std::ptrdiff_t>(t * hop) - pad;
        std::size_t changes = 0;
        bool prev = signal[dsp::reflect_index(start, signal.size())] >= 0.0f;
        for (std::size_t i = 1; i < frame; ++i) {
            const bool cur = signal[dsp::reflect_index(start + static_cast<std::ptrdiff_t>(i), signal.size())] >= 0.0f;
            changes += (cur != prev);
            prev = cur;
        }
        out(0, t) = static_cast<double>(changes) / static_cast<double>(frame - 1);
    }
    return out;
}

std::vector<double> gbdt_feature_vector(const FeatureBundle& bundle, bool with_minmax) {
    std::vector<double> out;
    out.reserve(summary_width(with_minmax));
    for (auto kind : kAllKinds) {
        const Matrix& m = bundle[kind].values;
        for (std::size_t r = 0; r < m.rows; ++r) {
            const auto row = m.row(r);
            double sum = 0.0;
            for (double v : row) sum += v;
            const double mean = sum / static_cast<double>(row.size());
            double ss = 0.0;
            for (double v : row) ss += (v - mean) * (v - mean);
            out.push_back(mean);
            out.push_back(std::sqrt(ss / static_cast<double>(row.size())));
            if (with_minmax) {
                const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
                out.push_back(*lo);
                out.push_back(*hi);
            }
        }
    }
    return out;
}

}  // namespace afen::features
