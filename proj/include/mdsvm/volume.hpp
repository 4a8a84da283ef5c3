#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mdsvm/errors.hpp"

namespace mdsvm {

// 3D scalar grid with optional physical voxel spacing (mm/voxel, 0 = unknown).
// Linear index (h*W + w)*D + d.
struct Volume {
    std::int64_t h = 0, w = 0, d = 0;
    std::array<float, 3> spacing{0.0f, 0.0f, 0.0f};
    std::vector<float> data;

    Volume() = default;
    Volume(std::int64_t h_, std::int64_t w_, std::int64_t d_, float fill = 0.0f)
        : h(h_), w(w_), d(d_), data(static_cast<std::size_t>(h_ * w_ * d_), fill) {}

    std::int64_t numel() const { return h * w * d; }
    float& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data[(i * w + j) * d + k]; }
    float at(std::int64_t i, std::int64_t j, std::int64_t k) const { return data[(i * w + j) * d + k]; }
};

// Binary occupancy grid; values strictly 0 or 1.
struct LabelVolume {
    std::int64_t h = 0, w = 0, d = 0;
    std::array<float, 3> spacing{0.0f, 0.0f, 0.0f};
    std::vector<std::uint8_t> data;

    LabelVolume() = default;
    LabelVolume(std::int64_t h_, std::int64_t w_, std::int64_t d_)
        : h(h_), w(w_), d(d_), data(static_cast<std::size_t>(h_ * w_ * d_), 0) {}

    std::int64_t numel() const { return h * w * d; }
    std::uint8_t& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data[(i * w + j) * d + k];
    }
    std::uint8_t at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data[(i * w + j) * d + k];
    }
    std::int64_t foreground_count() const;
};

// MDSV volume file: magic "MDSV", u8 version = 1, u8 dtype (0 = f32 LE,
// 1 = u8 label), u16 reserved, u32 extents H W D, three f32 spacings, then
// H*W*D elements with D fastest. Round-trips are bit-exact.
void save_volume(const std::string& path, const Volume& v);
void save_label(const std::string& path, const LabelVolume& v);
Volume load_volume(const std::string& path);
LabelVolume load_label(const std::string& path);

}  // namespace mdsvm
