#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afen/binary_io.hpp"

namespace afen::audio {

inline constexpr int kStandardRate = 22050;
inline constexpr std::size_t kStandardLength = 132300;  // 6.0 s at 22050 Hz

/// Mono waveform at an arbitrary positive rate. Samples are finite; decoded
/// PCM lies in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kStandardRate;

    /// Throws EmptyClip / InvalidArgument when the invariants do not hold.
    void validate() const;
};

/// A clip at exactly 22050 Hz and 132300 samples, so every feature matrix
/// downstream has 259 frames.
class StandardClip {
public:
    /// Takes ownership; throws ShapeMismatch unless size == kStandardLength.
    static StandardClip adopt(std::vector<float> samples);

    std::span<const float> samples() const noexcept { return samples_; }
    std::vector<float>& mutable_samples() noexcept { return samples_; }
    static constexpr int sample_rate() noexcept { return kStandardRate; }
    static constexpr std::size_t size() noexcept { return kStandardLength; }

    AudioClip to_clip() const { return {samples_, kStandardRate}; }

    friend bool operator==(const StandardClip&, const StandardClip&) = default;

private:
    explicit StandardClip(std::vector<float> s) : samples_(std::move(s)) {}
    std::vector<float> samples_;
};

enum class WavEncoding { Pcm16, Float32 };

/// Decodes a RIFF/WAVE container: PCM 16/24/32-bit or IEEE float32, mono or
/// stereo (averaged to mono). Integer samples are divided by 2^(bits-1).
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

/// 16-bit PCM by default; values outside [-1, 1] are clamped.
Bytes encode_wav(std::span<const float> samples, int sample_rate,
                 WavEncoding encoding = WavEncoding::Pcm16);
void write_wav(const AudioClip& clip, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::Pcm16);

/// Kaiser-windowed sinc interpolation from `in_rate` to `out_rate`.
/// Produces exactly `out_len` samples (zeros beyond the input support).
std::vector<float> resample(std::span<const float> input, double in_rate, double out_rate,
                            std::size_t out_len);

/// Natural output length ceil(n * out_rate / in_rate).
std::size_t resampled_length(std::size_t n, double in_rate, double out_rate);

/// Resample to 22050 Hz, keep the head, zero-pad the tail to 132300 samples.
StandardClip standardize_clip(const AudioClip& clip);

}  // namespace afen::audio
