#include "afen/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace afen::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;
};

FmtChunk parse_fmt(std::span<const std::uint8_t> body) {
    if (body.size() < 16) throw Error(Errc::MalformedRiff, "fmt chunk shorter than 16 bytes");
    ByteReader r(body, Errc::MalformedRiff);
    FmtChunk f;
    f.format = r.get<std::uint16_t>();
    f.channels = r.get<std::uint16_t>();
    f.sample_rate = r.get<std::uint32_t>();
    (void)r.get<std::uint32_t>();  // byte rate
    f.block_align = r.get<std::uint16_t>();
    f.bits = r.get<std::uint16_t>();
    if (f.format == kFormatExtensible) {
        if (body.size() < 40) throw Error(Errc::MalformedRiff, "extensible fmt chunk too short");
        (void)r.get<std::uint16_t>();  // cbSize
        (void)r.get<std::uint16_t>();  // valid bits
        (void)r.get<std::uint32_t>();  // channel mask
        f.format = r.get<std::uint16_t>();  // first two bytes of the subformat GUID
    }
    return f;
}

inline double read_sample(const std::uint8_t* p, const FmtChunk& fmt) {
    if (fmt.format == kFormatFloat) {
        float v;
        std::memcpy(&v, p, 4);
        return v;
    }
    switch (fmt.bits) {
        case 16: {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            return v / 32768.0;
        }
        case 24: {
            std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
            if (v & 0x800000) v -= 0x1000000;
            return v / 8388608.0;
        }
        default: {
            std::int32_t v;
            std::memcpy(&v, p, 4);
            return v / 2147483648.0;
        }
    }
}

// Kaiser-windowed sinc, tabulated in zero-crossing units over [0, kZeroCrossings].
constexpr int kZeroCrossings = 32;
constexpr int kTableDensity = 512;
constexpr double kKaiserBeta = 8.6;

const std::vector<double>& sinc_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t(kZeroCrossings * kTableDensity + 2, 0.0);
        const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
        for (std::size_t i = 0; i <= static_cast<std::size_t>(kZeroCrossings * kTableDensity); ++i) {
            const double u = static_cast<double>(i) / kTableDensity;
            const double sinc = (i == 0) ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
            const double r = u / kZeroCrossings;
            const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
            t[i] = sinc * w;
        }
        return t;
    }();
    return table;
}

}  // namespace

void AudioClip::validate() const {
    if (samples.empty()) throw Error(Errc::EmptyClip, "clip has no samples");
    if (sample_rate <= 0) throw Error(Errc::InvalidArgument, "sample rate must be positive");
    for (float s : samples)
        if (!std::isfinite(s)) throw Error(Errc::InvalidArgument, "non-finite sample");
}

StandardClip StandardClip::adopt(std::vector<float> samples) {
    if (samples.size() != kStandardLength)
        throw Error(Errc::ShapeMismatch, "standard clip needs " + std::to_string(kStandardLength) +
                                             " samples, got " + std::to_string(samples.size()));
    return StandardClip(std::move(samples));
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, Errc::MalformedRiff);
    if (bytes.size() < 12 || r.get_bytes(4) != "RIFF")
        throw Error(Errc::MalformedRiff, "missing RIFF magic");
    (void)r.get<std::uint32_t>();
    if (r.get_bytes(4) != "WAVE") throw Error(Errc::MalformedRiff, "missing WAVE form type");

    bool have_fmt = false;
    FmtChunk fmt;
    std::span<const std::uint8_t> data;
    bool have_data = false;
    while (r.remaining() >= 8) {
        const std::string id = r.get_bytes(4);
        const auto size = r.get<std::uint32_t>();
        if (id == "data") {
            if (size > r.remaining())
                throw Error(Errc::TruncatedData, "data chunk declares " + std::to_string(size) +
                                                     " bytes, " + std::to_string(r.remaining()) +
                                                     " present");
            data = r.get_span(size);
            have_data = true;
        } else {
            if (size > r.remaining())
                throw Error(Errc::MalformedRiff, "chunk '" + id + "' overruns the file");
            auto body = r.get_span(size);
            if (id == "fmt ") {
                fmt = parse_fmt(body);
                have_fmt = true;
            }
        }
        if ((size & 1u) && r.remaining() > 0) (void)r.get<std::uint8_t>();
    }
    if (!have_fmt) throw Error(Errc::MalformedRiff, "no fmt chunk");
    if (!have_data) throw Error(Errc::MalformedRiff, "no data chunk");

    const bool pcm_ok = fmt.format == kFormatPcm && (fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
    const bool float_ok = fmt.format == kFormatFloat && fmt.bits == 32;
    if (!pcm_ok && !float_ok)
        throw Error(Errc::UnsupportedEncoding, "format tag " + std::to_string(fmt.format) + " with " +
                                                   std::to_string(fmt.bits) + " bits");
    if (fmt.channels < 1 || fmt.channels > 2)
        throw Error(Errc::UnsupportedEncoding, std::to_string(fmt.channels) + " channels");
    if (fmt.sample_rate == 0) throw Error(Errc::MalformedRiff, "zero sample rate");

    const std::size_t bytes_per_sample = fmt.bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
    if (data.size() % frame_bytes != 0)
        throw Error(Errc::TruncatedData, "data chunk ends inside a sample frame");
    const std::size_t frames = data.size() / frame_bytes;
    if (frames == 0) throw Error(Errc::EmptyClip, "data chunk holds no samples");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(fmt.sample_rate);
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        const std::uint8_t* frame = data.data() + i * frame_bytes;
        double v = read_sample(frame, fmt);
        if (fmt.channels == 2) v = 0.5 * (v + read_sample(frame + bytes_per_sample, fmt));
        if (!std::isfinite(v)) throw Error(Errc::MalformedRiff, "non-finite float sample");
        clip.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
    try {
        return decode_wav(read_file(path));
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

Bytes encode_wav(std::span<const float> samples, int sample_rate, WavEncoding encoding) {
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint16_t format = encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));
    ByteWriter w;
    w.put_bytes("RIFF");
    w.put<std::uint32_t>(36 + data_bytes);
    w.put_bytes("WAVE");
    w.put_bytes("fmt ");
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(format);
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sample_rate));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sample_rate) * (bits / 8));
    w.put<std::uint16_t>(bits / 8);
    w.put<std::uint16_t>(bits);
    w.put_bytes("data");
    w.put<std::uint32_t>(data_bytes);
    for (float s : samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        if (encoding == WavEncoding::Pcm16) {
            const long q = std::lround(static_cast<double>(c) * 32768.0);
            w.put<std::int16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L)));
        } else {
            w.put<float>(c);
        }
    }
    return w.take();
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path, WavEncoding encoding) {
    write_file(path, encode_wav(clip.samples, clip.sample_rate, encoding));
}

std::size_t resampled_length(std::size_t n, double in_rate, double out_rate) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(n) * out_rate / in_rate - 1e-9));
}

std::vector<float> resample(std::span<const float> input, double in_rate, double out_rate,
                            std::size_t out_len) {
    if (!(in_rate > 0.0) || !(out_rate > 0.0))
        throw Error(Errc::InvalidArgument, "resample rates must be positive");
    const double ratio = out_rate / in_rate;
    // Anti-aliasing cutoff relative to the input Nyquist, slightly inside the band edge.
    const double scale = std::min(1.0, ratio) * 0.97;
    const double support = kZeroCrossings / scale;
    const auto& table = sinc_table();
    const auto n_in = static_cast<std::ptrdiff_t>(input.size());

    std::vector<float> out(out_len, 0.0f);
    for (std::size_t n = 0; n < out_len; ++n) {
        const double t = static_cast<double>(n) / ratio;
        const auto k_lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - support)));
        const auto k_hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + support)));
        double acc = 0.0;
        for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) {
            const double pos = std::abs(t - static_cast<double>(k)) * scale * kTableDensity;
            const auto i = static_cast<std::size_t>(pos);
            if (i >= table.size() - 1) continue;
            const double frac = pos - static_cast<double>(i);
            const double h = table[i] + frac * (table[i + 1] - table[i]);
            acc += input[static_cast<std::size_t>(k)] * h;
        }
        out[n] = static_cast<float>(acc * scale);
    }
    return out;
}

StandardClip standardize_clip(const AudioClip& clip) {
    clip.validate();
    std::vector<float> out;
    if (clip.sample_rate == kStandardRate) {
        const auto keep = std::min(clip.samples.size(), kStandardLength);
        out.assign(clip.samples.begin(), clip.samples.begin() + static_cast<std::ptrdiff_t>(keep));
    } else {
        const auto natural = resampled_length(clip.samples.size(), clip.sample_rate, kStandardRate);
        out = resample(clip.samples, clip.sample_rate, kStandardRate, std::min(natural, kStandardLength));
    }
    out.resize(kStandardLength, 0.0f);
    return StandardClip::adopt(std::move(out));
}

}  // namespace afen::audio
