#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afen/error.hpp"

namespace afen {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swapping");

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file + rename so readers never see partial files.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// Hex FNV-1a digest of a byte range (content hashes in run manifests).
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(std::string_view text);
std::string file_hash(const std::filesystem::path& path);

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto at = buf_.size();
        buf_.resize(at + sizeof(T));
        std::memcpy(buf_.data() + at, &value, sizeof(T));
    }
    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void put_string(std::string_view s) {
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        put_bytes(s);
    }
    const Bytes& bytes() const noexcept { return buf_; }
    Bytes take() noexcept { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked cursor; any overrun raises `overrun_code`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, Errc overrun_code)
        : bytes_(bytes), code_(overrun_code) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string get_string() { return get_bytes(get<std::uint16_t>()); }
    std::span<const std::uint8_t> get_span(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(code_, "unexpected end of data");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    Errc code_;
};

}  // namespace afen
