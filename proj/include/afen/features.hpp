#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "afen/audio_io.hpp"
#include "afen/fft.hpp"
#include "afen/matrix.hpp"
#include "afen/stft.hpp"

namespace afen::features {

using audio::StandardClip;

enum class FeatureKind : std::uint8_t { Mfcc = 0, Mel = 1, Cstft = 2, Rolloff = 3, Zcr = 4 };
inline constexpr std::array<FeatureKind, 5> kAllKinds{FeatureKind::Mfcc, FeatureKind::Mel,
                                                      FeatureKind::Cstft, FeatureKind::Rolloff,
                                                      FeatureKind::Zcr};
inline constexpr std::size_t kFrames = dsp::frame_count(audio::kStandardLength, dsp::kHop);  // 259
static_assert(kFrames == 259);

inline constexpr std::size_t kMfccCount = 40;
inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kPitchClasses = 12;
inline constexpr std::size_t kFftBins = dsp::kNfft / 2 + 1;  // 1025

constexpr std::size_t kind_rows(FeatureKind kind) noexcept {
    switch (kind) {
        case FeatureKind::Mfcc: return kMfccCount;
        case FeatureKind::Mel: return kMelBands;
        case FeatureKind::Cstft: return kPitchClasses;
        case FeatureKind::Rolloff: return 1;
        case FeatureKind::Zcr: return 1;
    }
    return 0;
}
std::string_view kind_name(FeatureKind kind) noexcept;

/// Width of the tree-model summary vector: 2 stats per row (364), or 4 with min/max (728).
constexpr std::size_t summary_width(bool with_minmax) noexcept {
    std::size_t rows = 0;
    for (auto k : kAllKinds) rows += kind_rows(k);
    return rows * (with_minmax ? 4 : 2);
}
static_assert(summary_width(false) == 364);

struct FeatureMatrix {
    FeatureKind kind = FeatureKind::Mfcc;
    Matrix values;

    /// Shape (kind_rows x 259), finiteness and per-kind value ranges.
    void validate() const;
};

struct FeatureBundle {
    std::array<FeatureMatrix, 5> matrices;  // indexed by FeatureKind
    std::vector<double> gbdt_vector;

    const FeatureMatrix& operator[](FeatureKind k) const noexcept {
        return matrices[static_cast<std::size_t>(k)];
    }
    FeatureMatrix& operator[](FeatureKind k) noexcept { return matrices[static_cast<std::size_t>(k)]; }
};

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

/// n_mels + 2 band edges equally spaced on the mel scale, in Hz.
std::vector<double> mel_band_edges(std::size_t n_mels, double f_lo, double f_hi);

/// Peak-normalised triangular filters, n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(std::size_t n_mels = kMelBands, std::size_t n_fft = dsp::kNfft,
                      double sample_rate = audio::kStandardRate, double f_lo = 0.0,
                      double f_hi = audio::kStandardRate / 2.0);

/// Orthonormal DCT-II basis, first n_out rows of the n_in-point transform.
Matrix dct_matrix(std::size_t n_out, std::size_t n_in);

/// Chroma index with C = 0 ... B = 11 (A = 9) for frequency `hz`.
std::size_t pitch_class(double hz) noexcept;

/// Precomputed analysis tables. Immutable after construction; one instance
/// can serve concurrent extractions.
class FeatureExtractor {
public:
    struct Options {
        double rolloff_pct = 0.85;
        bool summary_minmax = false;
    };

    FeatureExtractor();
    explicit FeatureExtractor(Options options);

    const Options& options() const noexcept { return options_; }
    const Matrix& filterbank() const noexcept { return filterbank_; }
    const Matrix& dct() const noexcept { return dct_; }

    /// filterbank x |S|^2
    Matrix mel_power(const Matrix& magnitude) const;
    /// ln(max(mel_power, 1e-10))
    Matrix log_mel(const Matrix& magnitude) const;

    Matrix mel_from_magnitude(const Matrix& magnitude) const;
    Matrix mfcc_from_log_mel(const Matrix& log_mel) const;
    Matrix chroma_from_magnitude(const Matrix& magnitude) const;
    Matrix rolloff_from_magnitude(const Matrix& magnitude, double pct) const;

    FeatureMatrix mel_spectrogram(const StandardClip& clip) const;
    FeatureMatrix mfcc(const StandardClip& clip) const;
    FeatureMatrix chroma_stft(const StandardClip& clip) const;
    FeatureMatrix spectral_rolloff(const StandardClip& clip) const;
    FeatureMatrix spectral_rolloff(const StandardClip& clip, double pct) const;
    FeatureMatrix zero_crossing_rate(const StandardClip& clip) const;

    /// All five matrices from one STFT pass, shape-checked, plus the summary vector.
    FeatureBundle extract(const StandardClip& clip) const;

private:
    Options options_;
    Matrix filterbank_;
    std::vector<std::pair<std::size_t, std::size_t>> filter_support_;  // nonzero [begin, end) per band
    Matrix dct_;
    std::vector<int> chroma_of_bin_;  // -1 for bins at or below 50 Hz
};

/// The default extractor, built once on first use.
const FeatureExtractor& default_extractor();

Matrix stft_magnitude(const StandardClip& clip);

/// Per centred frame: sign changes between consecutive samples / (frame - 1),
/// with sign(0) counted as nonnegative.
Matrix zero_crossing_rate(std::span<const float> signal, std::size_t frame = dsp::kNfft,
                          std::size_t hop = dsp::kHop);

/// Per-row (mean, population std[, min, max]) of each matrix in kind order.
std::vector<double> gbdt_feature_vector(const FeatureBundle& bundle, bool with_minmax = false);

}  // namespace afen::features
