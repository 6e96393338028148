#include "afen/feature_cache.hpp"

#include <string>

namespace afen::features {

Bytes encode_cache_matrix(std::uint8_t tag, const Matrix& m) {
    ByteWriter w;
    w.put_bytes("AFEN");
    w.put<std::uint16_t>(kCacheVersion);
    w.put<std::uint8_t>(tag);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) w.put<float>(static_cast<float>(v));
    return w.take();
}

CachedMatrix decode_cache_matrix(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, Errc::CacheFormatError);
    if (r.get_bytes(4) != "AFEN") throw Error(Errc::CacheFormatError, "bad magic");
    const auto version = r.get<std::uint16_t>();
    if (version != kCacheVersion)
        throw Error(Errc::CacheFormatError, "cache version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCacheVersion) + "; rerun `extract`");
    CachedMatrix out;
    out.tag = r.get<std::uint8_t>();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (r.remaining() != count * sizeof(float))
        throw Error(Errc::CacheFormatError, "payload size does not match " + std::to_string(rows) + "x" +
                                                std::to_string(cols));
    out.values = Matrix(rows, cols);
    for (auto& v : out.values.data) v = r.get<float>();
    return out;
}

void write_cache_matrix(const std::filesystem::path& path, std::uint8_t tag, const Matrix& m) {
    write_file(path, encode_cache_matrix(tag, m));
}

CachedMatrix read_cache_matrix(const std::filesystem::path& path, std::optional<std::uint8_t> expected_tag) {
    try {
        auto c = decode_cache_matrix(read_file(path));
        if (expected_tag && c.tag != *expected_tag)
            throw Error(Errc::CacheFormatError, "kind tag " + std::to_string(c.tag) + ", expected " +
                                                    std::to_string(*expected_tag));
        return c;
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

void write_feature(const std::filesystem::path& path, const FeatureMatrix& f) {
    write_cache_matrix(path, static_cast<std::uint8_t>(f.kind), f.values);
}

FeatureMatrix read_feature(const std::filesystem::path& path, FeatureKind kind) {
    FeatureMatrix f{kind, read_cache_matrix(path, static_cast<std::uint8_t>(kind)).values};
    f.validate();
    return f;
}

}  // namespace afen::features
