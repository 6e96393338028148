#include "afen/nn/serialize.hpp"

#include <string>

namespace afen::nn {

namespace {

void put_u32(ByteWriter& w, std::size_t v) { w.put<std::uint32_t>(static_cast<std::uint32_t>(v)); }

std::size_t get_u32(ByteReader& r) { return r.get<std::uint32_t>(); }

void put_blob(ByteWriter& w, const std::string& name, const std::vector<std::size_t>& dims,
              const std::vector<float>& values) {
    w.put_string(name);
    put_u32(w, dims.size());
    for (auto d : dims) put_u32(w, d);
    for (float v : values) w.put<float>(v);
}

void get_blob(ByteReader& r, const std::string& name, const std::vector<std::size_t>& dims, std::vector<float>& values) {
    const auto stored = r.get_string();
    if (stored != name) throw Error(Errc::CacheFormatError, "expected blob '" + name + "', found '" + stored + "'");
    const std::size_t nd = get_u32(r);
    std::vector<std::size_t> got(nd);
    for (auto& d : got) d = get_u32(r);
    if (got != dims) throw Error(Errc::CacheFormatError, "blob '" + name + "' has unexpected dimensions");
    for (auto& v : values) v = r.get<float>();
}

}  // namespace

Bytes encode_model(CnnModel<float>& model) {
    const auto& a = model.arch();
    ByteWriter w;
    w.put_bytes("AFENMODL");
    w.put<std::uint32_t>(kModelVersion);
    put_u32(w, a.branch_rows.size());
    for (auto r : a.branch_rows) put_u32(w, r);
    put_u32(w, a.frames);
    put_u32(w, a.blocks.size());
    for (const auto& b : a.blocks)
        for (auto v : {b.filters, b.kh, b.kw, b.sh, b.sw, b.ph, b.pw}) put_u32(w, v);
    put_u32(w, a.hidden.size());
    for (auto h : a.hidden) put_u32(w, h);
    put_u32(w, a.classes);
    w.put<double>(a.dropout);

    const auto params = model.parameters();
    const auto buffers = model.buffers();
    put_u32(w, params.size() + buffers.size());
    for (auto* p : params) put_blob(w, p->name, p->dims, p->value);
    for (auto* b : buffers) put_blob(w, b->name, {b->value.size()}, b->value);
    return w.take();
}

CnnModel<float> decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, Errc::CacheFormatError);
    if (r.get_bytes(8) != "AFENMODL") throw Error(Errc::CacheFormatError, "not a model file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion)
        throw Error(Errc::CacheFormatError, "model version " + std::to_string(version) + ", expected " +
                                                std::to_string(kModelVersion));
    ArchSpec a;
    a.branch_rows.resize(get_u32(r));
    for (auto& v : a.branch_rows) v = get_u32(r);
    a.frames = get_u32(r);
    a.blocks.resize(get_u32(r));
    for (auto& b : a.blocks)
        for (auto* v : {&b.filters, &b.kh, &b.kw, &b.sh, &b.sw, &b.ph, &b.pw}) *v = get_u32(r);
    a.hidden.resize(get_u32(r));
    for (auto& h : a.hidden) h = get_u32(r);
    a.classes = get_u32(r);
    a.dropout = r.get<double>();
    try {
        a.validate();
    } catch (const Error& e) {
        throw Error(Errc::CacheFormatError, e.detail());
    }

    CnnModel<float> model(a);
    const auto params = model.parameters();
    const auto buffers = model.buffers();
    if (get_u32(r) != params.size() + buffers.size())
        throw Error(Errc::CacheFormatError, "blob count does not match the architecture");
    for (auto* p : params) get_blob(r, p->name, p->dims, p->value);
    for (auto* b : buffers) get_blob(r, b->name, {b->value.size()}, b->value);
    if (r.remaining() != 0) throw Error(Errc::CacheFormatError, "trailing bytes after model data");
    return model;
}

void save_model(const std::filesystem::path& path, CnnModel<float>& model) { write_file(path, encode_model(model)); }

CnnModel<float> load_model(const std::filesystem::path& path) {
    try {
        return decode_model(read_file(path));
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

}  // namespace afen::nn
