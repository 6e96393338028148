#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "afen/binary_io.hpp"
#include "afen/features.hpp"

namespace afen::features {

// Cache layout: "AFEN", u16 version, u8 kind tag, u32 rows, u32 cols, then
// rows*cols little-endian f32 values in row-major order.
inline constexpr std::uint16_t kCacheVersion = 1;
inline constexpr std::uint8_t kSummaryTag = 5;  // per-split tree-model vectors

struct CachedMatrix {
    std::uint8_t tag = 0;
    Matrix values;
};

Bytes encode_cache_matrix(std::uint8_t tag, const Matrix& m);
/// Throws CacheFormatError on bad magic, version mismatch or size mismatch.
CachedMatrix decode_cache_matrix(std::span<const std::uint8_t> bytes);

void write_cache_matrix(const std::filesystem::path& path, std::uint8_t tag, const Matrix& m);
CachedMatrix read_cache_matrix(const std::filesystem::path& path,
                               std::optional<std::uint8_t> expected_tag = std::nullopt);

void write_feature(const std::filesystem::path& path, const FeatureMatrix& f);
/// Reads and validates a feature matrix of the given kind.
FeatureMatrix read_feature(const std::filesystem::path& path, FeatureKind kind);

}  // namespace afen::features
