#include "afen/binary_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "afen/rng.hpp"

namespace afen {

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text_file(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(Errc::IoFailure, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot rename onto " + path.string() + ": " + ec.message());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string content_hash(std::string_view text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
    return content_hash(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string file_hash(const std::filesystem::path& path) { return content_hash(read_file(path)); }

}  // namespace afen
