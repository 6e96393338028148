#include "afen/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "afen/stft.hpp"

namespace afen::augment {

namespace {

using dsp::cplx;
constexpr double kPi = std::numbers::pi;

double mean_power(std::span<const float> x) {
    double acc = 0.0;
    for (float v : x) acc += static_cast<double>(v) * v;
    return acc / static_cast<double>(x.size());
}

cplx biquad_response(const Biquad& s, double omega) {
    const cplx z1 = std::polar(1.0, -omega);
    const cplx z2 = z1 * z1;
    return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

}  // namespace

std::string_view kind_name(AugmentKind kind) noexcept {
    switch (kind) {
        case AugmentKind::Awgn: return "awgn";
        case AugmentKind::Bandpass: return "bandpass";
        case AugmentKind::TimeShift: return "shift";
        case AugmentKind::PitchShift: return "pitch";
    }
    return "?";
}

void AugmentSpec::validate() const {
    const double nyquist = audio::kStandardRate / 2.0;
    if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz && band_hi_hz < nyquist))
        throw Error(Errc::InvalidBand, "need 0 < band_lo_hz < band_hi_hz < Nyquist");
    if (band_order != 2 && band_order != 4 && band_order != 8)
        throw Error(Errc::InvalidBand, "band order must be 2, 4 or 8");
    if (!(shift_max_fraction >= 0.0 && shift_max_fraction <= 0.5))
        throw Error(Errc::InvalidArgument, "shift range must lie in [0, 0.5]");
    if (!(pitch_max_semitones >= 0.0 && pitch_max_semitones <= 4.0))
        throw Error(Errc::InvalidArgument, "pitch range must lie in [0, 4] semitones");
    if (std::isnan(snr_db)) throw Error(Errc::InvalidArgument, "snr_db is NaN");
}

StandardClip add_awgn(const StandardClip& clip, double snr_db, std::uint64_t seed) {
    const auto x = clip.samples();
    const double p_signal = mean_power(x);
    if (!(p_signal > 0.0)) throw Error(Errc::SilentClip, "SNR undefined for a zero-power clip");
    if (snr_db == kNoNoise) return clip;
    const double sigma = std::sqrt(p_signal / std::pow(10.0, snr_db / 10.0));
    Rng rng(seed);
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>(x[i] + sigma * rng.normal());
    return StandardClip::adopt(std::move(out));
}

std::vector<Biquad> design_butterworth_bandpass(double lo_hz, double hi_hz, int order,
                                                double sample_rate) {
    if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < sample_rate / 2.0))
        throw Error(Errc::InvalidBand, "band [" + std::to_string(lo_hz) + ", " + std::to_string(hi_hz) +
                                           "] outside (0, Nyquist)");
    if (order != 2 && order != 4 && order != 8)
        throw Error(Errc::InvalidBand, "order must be 2, 4 or 8");

    const double fs2 = 2.0 * sample_rate;
    const double w_lo = fs2 * std::tan(kPi * lo_hz / sample_rate);
    const double w_hi = fs2 * std::tan(kPi * hi_hz / sample_rate);
    const double w0_sq = w_lo * w_hi;
    const double bw = w_hi - w_lo;
    const double omega_centre = 2.0 * std::atan(std::sqrt(w0_sq) / fs2);

    std::vector<Biquad> sections;
    sections.reserve(static_cast<std::size_t>(order));
    // Upper-half-plane prototype poles; each maps to two bandpass poles and
    // every bandpass pole pair becomes one biquad with zeros at z = +1, -1.
    for (int k = 0; k < order / 2; ++k) {
        const double theta = kPi * (2.0 * k + 1.0 + order) / (2.0 * order);
        const cplx p = std::polar(1.0, theta);
        const cplx disc = std::sqrt(p * p * bw * bw - 4.0 * w0_sq);
        for (const cplx s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
            const cplx z = (1.0 + s / fs2) / (1.0 - s / fs2);
            Biquad q{1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)};
            const double g = 1.0 / std::abs(biquad_response(q, omega_centre));
            q.b0 *= g;
            q.b2 *= g;
            sections.push_back(q);
        }
    }
    return sections;
}

double cascade_gain(std::span<const Biquad> sections, double hz, double sample_rate) {
    cplx h = 1.0;
    const double omega = 2.0 * kPi * hz / sample_rate;
    for (const auto& s : sections) h *= biquad_response(s, omega);
    return std::abs(h);
}

std::vector<float> apply_cascade(std::span<const Biquad> sections, std::span<const float> input) {
    std::vector<double> buf(input.begin(), input.end());
    for (const auto& s : sections) {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : buf) {
            const double y = s.b0 * v + z1;
            z1 = s.b1 * v - s.a1 * y + z2;
            z2 = s.b2 * v - s.a2 * y;
            v = y;
        }
    }
    return {buf.begin(), buf.end()};
}

StandardClip bandpass_filter(const StandardClip& clip, double lo_hz, double hi_hz, int order) {
    const auto sections = design_butterworth_bandpass(lo_hz, hi_hz, order, StandardClip::sample_rate());
    return StandardClip::adopt(apply_cascade(sections, clip.samples()));
}

std::ptrdiff_t shift_samples(double shift_fraction, std::size_t length) noexcept {
    return static_cast<std::ptrdiff_t>(std::lround(shift_fraction * static_cast<double>(length)));
}

StandardClip time_shift(const StandardClip& clip, double shift_fraction) {
    if (!(std::abs(shift_fraction) <= 0.5))
        throw Error(Errc::InvalidArgument, "|shift_fraction| must be <= 0.5");
    const auto x = clip.samples();
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    auto s = shift_samples(shift_fraction, x.size()) % n;
    if (s < 0) s += n;
    std::vector<float> out(x.size());
    std::rotate_copy(x.begin(), x.end() - s, x.end(), out.begin());
    return StandardClip::adopt(std::move(out));
}

std::vector<float> time_stretch(std::span<const float> signal, double factor) {
    if (!(factor > 0.0)) throw Error(Errc::InvalidArgument, "stretch factor must be positive");
    const std::size_t n_fft = dsp::kNfft;
    const std::size_t hop = n_fft / 4;
    const auto spec = dsp::stft(signal, n_fft, hop);
    const double rate = 1.0 / factor;
    const auto out_frames = static_cast<std::size_t>(std::ceil(static_cast<double>(spec.frames) / rate));

    dsp::ComplexSpectrogram out;
    out.bins = spec.bins;
    out.frames = out_frames;
    out.data.resize(out.bins * out.frames);

    std::vector<double> advance(spec.bins);
    for (std::size_t k = 0; k < spec.bins; ++k)
        advance[k] = 2.0 * kPi * static_cast<double>(k * hop) / static_cast<double>(n_fft);
    std::vector<double> phase(spec.bins);
    for (std::size_t k = 0; k < spec.bins; ++k) phase[k] = std::arg(spec.at(k, 0));

    auto column = [&](std::size_t t, std::size_t k) -> cplx {
        return t < spec.frames ? spec.at(k, t) : cplx{};
    };
    for (std::size_t t = 0; t < out_frames; ++t) {
        const double step = static_cast<double>(t) * rate;
        const auto left = static_cast<std::size_t>(step);
        const double alpha = step - static_cast<double>(left);
        for (std::size_t k = 0; k < spec.bins; ++k) {
            const cplx c0 = column(left, k);
            const cplx c1 = column(left + 1, k);
            const double mag = (1.0 - alpha) * std::abs(c0) + alpha * std::abs(c1);
            out.at(k, t) = std::polar(mag, phase[k]);
            double dphase = std::arg(c1) - std::arg(c0) - advance[k];
            dphase -= 2.0 * kPi * std::round(dphase / (2.0 * kPi));
            phase[k] += advance[k] + dphase;
        }
    }
    const auto length = static_cast<std::size_t>(std::lround(static_cast<double>(signal.size()) * factor));
    const auto y = dsp::istft(out, hop, length);
    return {y.begin(), y.end()};
}

StandardClip pitch_shift(const StandardClip& clip, double semitones) {
    if (!(std::abs(semitones) <= kMaxPitchSemitones))
        throw Error(Errc::InvalidArgument, "|semitones| must be <= 12");
    if (semitones == 0.0) return clip;
    const double factor = std::pow(2.0, semitones / 12.0);
    const auto stretched = time_stretch(clip.samples(), factor);
    const auto n = StandardClip::size();
    return StandardClip::adopt(
        audio::resample(stretched, static_cast<double>(stretched.size()), static_cast<double>(n), n));
}

Variant make_variant(const StandardClip& clip, const AugmentSpec& spec, std::string_view clip_key,
                     AugmentKind kind, std::uint64_t variant_index) {
    Rng rng = Rng::substream(spec.seed ^ fnv1a64(clip_key), variant_index);
    switch (kind) {
        case AugmentKind::Awgn:
            return {kind, spec.snr_db, add_awgn(clip, spec.snr_db, rng.next_u64())};
        case AugmentKind::Bandpass:
            return {kind, static_cast<double>(spec.band_order),
                    bandpass_filter(clip, spec.band_lo_hz, spec.band_hi_hz, spec.band_order)};
        case AugmentKind::TimeShift: {
            const double f = rng.uniform(-spec.shift_max_fraction, spec.shift_max_fraction);
            return {kind, f, time_shift(clip, f)};
        }
        case AugmentKind::PitchShift: {
            const double s = rng.uniform(-spec.pitch_max_semitones, spec.pitch_max_semitones);
            return {kind, s, pitch_shift(clip, s)};
        }
    }
    throw Error(Errc::InvalidArgument, "unknown augmentation kind");
}

std::vector<Variant> make_variants(const StandardClip& clip, const AugmentSpec& spec,
                                   std::string_view clip_key, std::size_t count) {
    std::vector<Variant> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(make_variant(clip, spec, clip_key, kAllKinds[i % kAllKinds.size()], i));
    return out;
}

}  // namespace afen::augment
