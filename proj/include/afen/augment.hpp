#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "afen/audio_io.hpp"
#include "afen/rng.hpp"

namespace afen::augment {

using audio::StandardClip;

enum class AugmentKind : std::uint8_t { Awgn = 0, Bandpass = 1, TimeShift = 2, PitchShift = 3 };
inline constexpr std::array<AugmentKind, 4> kAllKinds{AugmentKind::Awgn, AugmentKind::Bandpass,
                                                      AugmentKind::TimeShift, AugmentKind::PitchShift};
std::string_view kind_name(AugmentKind kind) noexcept;

/// Pass this as `snr_db` to add no noise at all.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Ranges from which per-variant augmentation parameters are drawn.
struct AugmentSpec {
    double snr_db = 20.0;
    double band_lo_hz = 100.0;
    double band_hi_hz = 2000.0;
    int band_order = 4;
    double shift_max_fraction = 0.2;   // shift drawn uniformly from [-max, max]
    double pitch_max_semitones = 2.0;  // pitch drawn uniformly from [-max, max]
    std::uint64_t seed = 0;

    void validate() const;
};

/// Output = clip + N(0, sigma^2) with sigma chosen so the signal-to-noise
/// ratio equals `snr_db`. Throws SilentClip for zero-power input.
StandardClip add_awgn(const StandardClip& clip, double snr_db, std::uint64_t seed);

struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Digital Butterworth bandpass: `order`-pole lowpass prototype, lowpass-to-
/// bandpass transform, bilinear transform with pre-warped edges. Returns
/// `order` second-order sections, each normalised to unit gain at the
/// geometric band centre.
std::vector<Biquad> design_butterworth_bandpass(double lo_hz, double hi_hz, int order,
                                                double sample_rate);

/// Magnitude response of a biquad cascade at frequency `hz`.
double cascade_gain(std::span<const Biquad> sections, double hz, double sample_rate);

/// Single-pass causal filtering (direct form II transposed, double state).
std::vector<float> apply_cascade(std::span<const Biquad> sections, std::span<const float> input);

/// order must be 2, 4 or 8 and 0 < lo < hi < Nyquist, else InvalidBand.
StandardClip bandpass_filter(const StandardClip& clip, double lo_hz, double hi_hz, int order);

/// Number of samples `time_shift` rotates by: round(fraction * length).
std::ptrdiff_t shift_samples(double shift_fraction, std::size_t length) noexcept;

/// Circular rotation: out[(i + s) mod N] = in[i]. |shift_fraction| <= 0.5.
StandardClip time_shift(const StandardClip& clip, double shift_fraction);

/// Phase-vocoder time stretch; output length round(n * factor).
std::vector<float> time_stretch(std::span<const float> signal, double factor);

inline constexpr double kMaxPitchSemitones = 12.0;

/// Time stretch by 2^(semitones/12) then resample back to 132300 samples.
/// |semitones| <= 12; augmentation draws stay within AugmentSpec's +-4 bound.
StandardClip pitch_shift(const StandardClip& clip, double semitones);

/// One augmented copy of a clip with its drawn parameter recorded.
struct Variant {
    AugmentKind kind;
    double parameter;  // snr dB, band order, shift fraction, or semitones
    StandardClip clip;
};

/// Applies augmentation `kind` with parameters drawn from the clip's own
/// substream (spec.seed XOR hash(clip_key) mixed with `variant_index`), so the
/// result depends only on (clip, spec, clip_key, variant_index).
Variant make_variant(const StandardClip& clip, const AugmentSpec& spec, std::string_view clip_key,
                     AugmentKind kind, std::uint64_t variant_index);

/// `count` variants cycling through AWGN, bandpass, shift, pitch.
std::vector<Variant> make_variants(const StandardClip& clip, const AugmentSpec& spec,
                                   std::string_view clip_key, std::size_t count);

}  // namespace afen::augment
