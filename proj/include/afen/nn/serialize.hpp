#pragma once

#include <filesystem>
#include <span>

#include "afen/binary_io.hpp"
#include "afen/nn/model.hpp"

namespace afen::nn {

inline constexpr std::uint32_t kModelVersion = 1;

/// "AFENMODL", version, architecture table, then every parameter and buffer
/// as (name, dims, little-endian f32 values).
Bytes encode_model(CnnModel<float>& model);
CnnModel<float> decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, CnnModel<float>& model);
CnnModel<float> load_model(const std::filesystem::path& path);

}  // namespace afen::nn
