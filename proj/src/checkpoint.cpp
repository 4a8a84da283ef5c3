#include "mdsvm/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mdsvm {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'S', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamRegistry& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(params.items().size()));
    for (const auto& [name, t] : params.items()) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.dim()));
        for (int i = 0; i < t.dim(); ++i) put_u32(os, static_cast<std::uint32_t>(t.extent(i)));
        for (double v : t.values()) put_f64(os, v);
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamRegistry& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw IoError("bad checkpoint magic in " + path);
    }
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    }
    const std::uint32_t count = get_u32(is);
    if (count != params.items().size()) {
        throw IoError("checkpoint has " + std::to_string(count) + " records, network expects " +
                      std::to_string(params.items().size()));
    }
    for (auto& [name, t] : params.items()) {
        const std::uint32_t name_len = get_u32(is);
        std::string rec_name(name_len, '\0');
        is.read(rec_name.data(), name_len);
        if (rec_name != name) {
            throw IoError("checkpoint record '" + rec_name + "' does not match parameter '" + name + "'");
        }
        const std::uint32_t rank = get_u32(is);
        if (rank != static_cast<std::uint32_t>(t.dim())) {
            throw IoError("checkpoint rank mismatch for '" + name + "'");
        }
        for (int i = 0; i < t.dim(); ++i) {
            const std::uint32_t e = get_u32(is);
            if (e != static_cast<std::uint32_t>(t.extent(i))) {
                throw IoError("checkpoint shape mismatch for '" + name + "' at axis " + std::to_string(i));
            }
        }
        auto vals = t.mutable_values();
        for (auto& v : vals) v = get_f64(is);
        if (!is) throw IoError("truncated checkpoint: " + path);
    }
}

}  // namespace mdsvm
