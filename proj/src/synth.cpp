#include "afen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "afen/audio_io.hpp"
#include "afen/augment.hpp"
#include "afen/binary_io.hpp"
#include "afen/error.hpp"
#include "afen/rng.hpp"

namespace afen::synth {

using dataset::Label;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> noise_band(Rng& rng, std::size_t n, double lo, double hi, double rate) {
    std::vector<float> white(n);
    for (auto& v : white) v = static_cast<float>(rng.normal());
    const auto sections = augment::design_butterworth_bandpass(lo, hi, 4, rate);
    const auto filtered = augment::apply_cascade(sections, white);
    double power = 0.0;
    for (float v : filtered) power += static_cast<double>(v) * v;
    const double scale = 1.0 / std::sqrt(std::max(power / static_cast<double>(n), 1e-20));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = filtered[i] * scale;
    return out;
}

// Sawtooth-swept chirp from f0 to f1 restarting every `period` seconds.
std::vector<double> chirp_train(std::size_t n, double rate, double f0, double f1, double period, double phase) {
    std::vector<double> out(n);
    double theta = phase;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        const double u = std::fmod(t, period) / period;
        theta += kTwoPi * (f0 + (f1 - f0) * u) / rate;
        out[i] = std::sin(theta);
    }
    return out;
}

}  // namespace

std::vector<float> synth_signal(Label label, const SynthOptions& o, std::uint64_t key) {
    const double rate = o.sample_rate;
    const auto n = static_cast<std::size_t>(std::lround(o.seconds * rate));
    Rng rng = Rng::substream(o.seed, key);
    const double jitter = rng.uniform(0.94, 1.06);
    const double phase = rng.uniform(0.0, kTwoPi);

    std::vector<double> s(n, 0.0);
    auto tone = [&](double f, double amp) {
        for (std::size_t i = 0; i < n; ++i) s[i] += amp * std::sin(kTwoPi * f * static_cast<double>(i) / rate + phase);
    };
    switch (label) {
        case Label::Asthma:
            tone(410.0 * jitter, 1.0);
            tone(820.0 * jitter, 0.35);
            break;
        case Label::Bronchiectasis:
            s = chirp_train(n, rate, 200.0 * jitter, 600.0 * jitter, rng.uniform(0.8, 1.2), phase);
            break;
        case Label::Bronchiolitis:
            s = chirp_train(n, rate, 2400.0 * jitter, 1400.0 * jitter, rng.uniform(0.8, 1.2), phase);
            break;
        case Label::Copd:
            s = noise_band(rng, n, 80.0 * jitter, 200.0 * jitter, rate);
            break;
        case Label::Healthy:
            s = noise_band(rng, n, 250.0 * jitter, 700.0 * jitter, rate);
            break;
        case Label::Lrti: {
            // Decaying 1 kHz bursts at random instants (crackle-like).
            const double f = 1000.0 * jitter;
            const auto decay = static_cast<std::size_t>(0.012 * rate);
            const std::size_t bursts = 40 + rng.below(30);
            for (std::size_t b = 0; b < bursts; ++b) {
                const auto at = rng.below(n);
                for (std::size_t j = 0; j < 4 * decay && at + j < n; ++j)
                    s[at + j] += 2.0 * std::exp(-static_cast<double>(j) / decay) *
                                 std::sin(kTwoPi * f * static_cast<double>(j) / rate);
            }
            break;
        }
        case Label::Pneumonia: {
            const double am = rng.uniform(2.5, 3.5);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / rate;
                const double env = 0.6 + 0.4 * std::sin(kTwoPi * am * t);
                s[i] = env * (std::sin(kTwoPi * 150.0 * jitter * t + phase) +
                              0.7 * std::sin(kTwoPi * 1200.0 * jitter * t + 2.0 * phase));
            }
            break;
        }
        case Label::Urti:
            s = noise_band(rng, n, 3000.0 * jitter, 5000.0 * jitter, rate);
            break;
    }

    // Breathing envelope, background noise and level.
    const double breath = rng.uniform(0.2, 0.4);
    const double breath_phase = rng.uniform(0.0, kTwoPi);
    const double floor = rng.uniform(0.01, 0.04);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        s[i] = s[i] * (0.65 + 0.35 * std::sin(kTwoPi * breath * t + breath_phase)) + floor * rng.normal();
        peak = std::max(peak, std::abs(s[i]));
    }
    const double level = rng.uniform(0.3, 0.8) / std::max(peak, 1e-12);
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(s[i] * level);
    return out;
}

std::vector<dataset::Recording> write_corpus(const fs::path& dir, const SynthOptions& o) {
    if (o.clips == 0 || o.recordings_per_patient == 0 || o.seconds <= 0.0 || o.sample_rate <= 0)
        throw Error(Errc::InvalidArgument, "synthetic corpus needs clips, recordings per patient, length and rate > 0");
    fs::create_directories(dir);
    constexpr std::array<dataset::ChestLocation, 7> kLocations{
        dataset::ChestLocation::Tc, dataset::ChestLocation::Al, dataset::ChestLocation::Ar,
        dataset::ChestLocation::Pl, dataset::ChestLocation::Pr, dataset::ChestLocation::Ll,
        dataset::ChestLocation::Lr};

    std::vector<dataset::Recording> out;
    std::string diagnosis;
    const std::size_t patients = (o.clips + o.recordings_per_patient - 1) / o.recordings_per_patient;
    for (std::size_t p = 0; p < patients; ++p) {
        const int patient = o.first_patient + static_cast<int>(p);
        const auto label = static_cast<Label>(p % dataset::kClassCount);
        diagnosis += std::to_string(patient) + "," + std::string(dataset::label_name(label)) + "\n";
        for (std::size_t r = 0; r < o.recordings_per_patient; ++r) {
            const std::size_t index = p * o.recordings_per_patient + r;
            if (index >= o.clips) break;
            dataset::Recording rec;
            rec.label = label;
            rec.meta.patient_id = patient;
            rec.meta.recording_index = std::to_string(r + 1) + "b1";
            rec.meta.location = kLocations[r % kLocations.size()];
            rec.meta.mode = dataset::AcquisitionMode::Sc;
            rec.meta.equipment = "Synth";
            rec.meta.path = dir / (dataset::format_icbhi_stem(rec.meta) + ".wav");
            const auto samples = synth_signal(label, o, index);
            write_file(rec.meta.path, audio::encode_wav(samples, o.sample_rate));
            out.push_back(std::move(rec));
        }
    }
    write_text_file(dir / dataset::kDiagnosisFile, diagnosis);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.meta.path.filename() < b.meta.path.filename();
    });
    return out;
}

}  // namespace afen::synth
