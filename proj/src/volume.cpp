#include "mdsvm/volume.hpp"

#include <cstring>
#include <fstream>

namespace mdsvm {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'S', 'V'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeU8 = 1;

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

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    const std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

void write_header(std::ostream& os, std::uint8_t dtype, std::int64_t h, std::int64_t w,
                  std::int64_t d, const std::array<float, 3>& spacing) {
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(dtype));
    os.put(0);
    os.put(0);
    put_u32(os, static_cast<std::uint32_t>(h));
    put_u32(os, static_cast<std::uint32_t>(w));
    put_u32(os, static_cast<std::uint32_t>(d));
    for (float s : spacing) put_f32(os, s);
}

struct Header {
    std::uint8_t dtype;
    std::int64_t h, w, d;
    std::array<float, 3> spacing;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad volume magic in " + path);
    const int version = is.get();
    if (version != kVersion) throw IoError("unsupported volume version in " + path);
    Header hd{};
    hd.dtype = static_cast<std::uint8_t>(is.get());
    is.get();
    is.get();  // reserved
    hd.h = get_u32(is);
    hd.w = get_u32(is);
    hd.d = get_u32(is);
    for (auto& s : hd.spacing) s = get_f32(is);
    if (!is) throw IoError("truncated volume header in " + path);
    if (hd.h <= 0 || hd.w <= 0 || hd.d <= 0) throw IoError("invalid volume extents in " + path);
    return hd;
}

}  // namespace

std::int64_t LabelVolume::foreground_count() const {
    std::int64_t n = 0;
    for (auto v : data) n += v;
    return n;
}

void save_volume(const std::string& path, const Volume& v) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_header(os, kDtypeF32, v.h, v.w, v.d, v.spacing);
    for (float x : v.data) put_f32(os, x);
    if (!os) throw IoError("volume write failed: " + path);
}

void save_label(const std::string& path, const LabelVolume& v) {
    for (auto x : v.data) {
        if (x > 1) throw ContractError("label volume must be binary");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_header(os, kDtypeU8, v.h, v.w, v.d, v.spacing);
    os.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (!os) throw IoError("label write failed: " + path);
}

Volume load_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    const Header hd = read_header(is, path);
    if (hd.dtype != kDtypeF32) throw IoError("expected float volume (dtype 0) in " + path);
    Volume v(hd.h, hd.w, hd.d);
    v.spacing = hd.spacing;
    for (auto& x : v.data) x = get_f32(is);
    if (!is) throw IoError("truncated volume data in " + path);
    return v;
}

LabelVolume load_label(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    const Header hd = read_header(is, path);
    if (hd.dtype != kDtypeU8) throw IoError("expected label volume (dtype 1) in " + path);
    LabelVolume v(hd.h, hd.w, hd.d);
    v.spacing = hd.spacing;
    is.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
    if (!is) throw IoError("truncated label data in " + path);
    for (auto x : v.data) {
        if (x > 1) throw IoError("label volume in " + path + " is not binary");
    }
    return v;
}

}  // namespace mdsvm
