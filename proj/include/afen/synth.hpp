#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afen/dataset.hpp"

namespace afen::synth {

/// Synthetic stand-in for the respiratory corpus: each diagnosis class gets
/// its own signature (tone, chirp, noise band or click train) with per-clip
/// jitter in frequency, level, breathing envelope and background noise.
struct SynthOptions {
    std::size_t clips = 240;
    std::size_t recordings_per_patient = 3;
    double seconds = 6.0;
    int sample_rate = 22050;
    std::uint64_t seed = 0;
    int first_patient = 101;
};

/// Samples for one clip of class `label`; depends only on (label, seed, key).
std::vector<float> synth_signal(dataset::Label label, const SynthOptions& options, std::uint64_t key);

/// Writes clips named like the real corpus (patients from `first_patient`,
/// classes assigned round-robin by patient) as 16-bit WAVs, plus
/// patient_diagnosis.csv. Returns the recordings in filename order.
std::vector<dataset::Recording> write_corpus(const std::filesystem::path& dir, const SynthOptions& options);

}  // namespace afen::synth
