#include "mdsvm/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace mdsvm {

namespace {

Tensor volume_to_tensor(const Volume& v) {
    std::vector<double> data(v.data.begin(), v.data.end());
    return Tensor::from_data({1, 1, v.h, v.w, v.d}, std::move(data));
}

Volume tensor_to_volume(const Tensor& t) {
    Volume v(t.extent(2), t.extent(3), t.extent(4));
    auto vals = t.values();
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(vals[i]);
    return v;
}

inline double half_pixel_src(std::int64_t o, std::int64_t out_ext, std::int64_t in_ext) {
    const double ratio = static_cast<double>(in_ext) / static_cast<double>(out_ext);
    return (static_cast<double>(o) + 0.5) * ratio - 0.5;
}

// 1D separable Chebyshev dilation by `radius`: a voxel turns on when the
// nearest set voxel along the axis is within the radius. Linear per line.
void dilate_axis(std::vector<std::uint8_t>& m, std::int64_t H, std::int64_t W, std::int64_t D,
                 int axis, std::int64_t radius) {
    const std::int64_t ext[3] = {H, W, D};
    const std::int64_t stride[3] = {W * D, D, 1};
    const std::int64_t n = ext[axis];
    const std::int64_t s = stride[axis];
    const std::int64_t far = n + radius + 1;
    std::vector<std::int64_t> dist(static_cast<std::size_t>(n));
    const std::int64_t a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (std::int64_t i = 0; i < ext[a1]; ++i) {
        for (std::int64_t j = 0; j < ext[a2]; ++j) {
            const std::int64_t base = i * stride[a1] + j * stride[a2];
            std::int64_t last = -far;
            for (std::int64_t k = 0; k < n; ++k) {
                if (m[base + k * s]) last = k;
                dist[static_cast<std::size_t>(k)] = k - last;
            }
            std::int64_t next = 2 * far;
            for (std::int64_t k = n - 1; k >= 0; --k) {
                if (m[base + k * s]) next = k;
                dist[static_cast<std::size_t>(k)] = std::min(dist[static_cast<std::size_t>(k)], next - k);
                if (dist[static_cast<std::size_t>(k)] <= radius) m[base + k * s] = 1;
            }
        }
    }
}

}  // namespace

Volume normalize_volume(const Volume& v) {
    double mean = 0.0;
    for (float x : v.data) mean += x;
    mean /= static_cast<double>(v.numel());
    double var = 0.0;
    for (float x : v.data) {
        const double d = x - mean;
        var += d * d;
    }
    var /= static_cast<double>(v.numel());
    const double scale = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    Volume out = v;
    for (auto& x : out.data) x = static_cast<float>((x - mean) * scale);
    return out;
}

Volume downsample_volume(const Volume& v, std::int64_t th, std::int64_t tw, std::int64_t td) {
    if (th < 1 || tw < 1 || td < 1) throw ConfigError("downsample: target extents must be positive");
    Volume out(th, tw, td);
    out.spacing = v.spacing;
    auto tap = [](double src, std::int64_t ext, std::int64_t& i0, std::int64_t& i1, double& t) {
        double c = std::clamp(src, 0.0, static_cast<double>(ext - 1));
        if (ext == 1) {
            i0 = i1 = 0;
            t = 0.0;
            return;
        }
        i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c)), ext - 2);
        i1 = i0 + 1;
        t = c - static_cast<double>(i0);
    };
    for (std::int64_t i = 0; i < th; ++i) {
        std::int64_t h0, h1;
        double ft;
        tap(half_pixel_src(i, th, v.h), v.h, h0, h1, ft);
        for (std::int64_t j = 0; j < tw; ++j) {
            std::int64_t w0, w1;
            double gt;
            tap(half_pixel_src(j, tw, v.w), v.w, w0, w1, gt);
            for (std::int64_t k = 0; k < td; ++k) {
                std::int64_t d0, d1;
                double ht;
                tap(half_pixel_src(k, td, v.d), v.d, d0, d1, ht);
                const double c00 = v.at(h0, w0, d0) + (v.at(h0, w0, d1) - v.at(h0, w0, d0)) * ht;
                const double c01 = v.at(h0, w1, d0) + (v.at(h0, w1, d1) - v.at(h0, w1, d0)) * ht;
                const double c10 = v.at(h1, w0, d0) + (v.at(h1, w0, d1) - v.at(h1, w0, d0)) * ht;
                const double c11 = v.at(h1, w1, d0) + (v.at(h1, w1, d1) - v.at(h1, w1, d0)) * ht;
                const double c0 = c00 + (c01 - c00) * gt;
                const double c1 = c10 + (c11 - c10) * gt;
                out.at(i, j, k) = static_cast<float>(c0 + (c1 - c0) * ft);
            }
        }
    }
    return out;
}

LabelVolume downsample_label(const LabelVolume& v, std::int64_t th, std::int64_t tw, std::int64_t td) {
    if (th < 1 || tw < 1 || td < 1) throw ConfigError("downsample: target extents must be positive");
    LabelVolume out(th, tw, td);
    out.spacing = v.spacing;
    auto nearest = [](std::int64_t o, std::int64_t out_ext, std::int64_t in_ext) {
        const double src = half_pixel_src(o, out_ext, in_ext);
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::lround(src)), 0, in_ext - 1);
    };
    for (std::int64_t i = 0; i < th; ++i) {
        const std::int64_t si = nearest(i, th, v.h);
        for (std::int64_t j = 0; j < tw; ++j) {
            const std::int64_t sj = nearest(j, tw, v.w);
            for (std::int64_t k = 0; k < td; ++k) {
                out.at(i, j, k) = v.at(si, sj, nearest(k, td, v.d));
            }
        }
    }
    return out;
}

Volume coarse_segment(const Volume& v, const Network& net) {
    Tensor probs = net.forward(volume_to_tensor(v));
    Volume out = tensor_to_volume(probs);
    out.spacing = v.spacing;
    return out;
}

ExtractResult extract_blocks(const Volume& coarse_probs, const Volume& original, double threshold,
                             std::int64_t block_side) {
    const std::int64_t H = original.h, W = original.w, D = original.d;
    if (block_side < 1 || block_side > H || block_side > W || block_side > D) {
        throw ConfigError("extract_blocks: block side " + std::to_string(block_side) +
                          " does not fit the volume");
    }
    // threshold, then upscale the mask to the original grid (nearest)
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(H * W * D), 0);
    auto nearest = [](std::int64_t o, std::int64_t out_ext, std::int64_t in_ext) {
        const double src = half_pixel_src(o, out_ext, in_ext);
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::lround(src)), 0, in_ext - 1);
    };
    bool any = false;
    for (std::int64_t i = 0; i < H; ++i) {
        const std::int64_t si = nearest(i, H, coarse_probs.h);
        for (std::int64_t j = 0; j < W; ++j) {
            const std::int64_t sj = nearest(j, W, coarse_probs.w);
            for (std::int64_t k = 0; k < D; ++k) {
                const std::int64_t sk = nearest(k, D, coarse_probs.d);
                if (coarse_probs.at(si, sj, sk) > threshold) {
                    mask[static_cast<std::size_t>((i * W + j) * D + k)] = 1;
                    any = true;
                }
            }
        }
    }
    if (!any) return {{}, true};

    // one-block dilation margin
    dilate_axis(mask, H, W, D, 0, block_side);
    dilate_axis(mask, H, W, D, 1, block_side);
    dilate_axis(mask, H, W, D, 2, block_side);

    // bounding region of the dilated mask
    std::int64_t lo[3] = {H, W, D}, hi[3] = {-1, -1, -1};
    for (std::int64_t i = 0; i < H; ++i) {
        for (std::int64_t j = 0; j < W; ++j) {
            for (std::int64_t k = 0; k < D; ++k) {
                if (!mask[static_cast<std::size_t>((i * W + j) * D + k)]) continue;
                lo[0] = std::min(lo[0], i);
                lo[1] = std::min(lo[1], j);
                lo[2] = std::min(lo[2], k);
                hi[0] = std::max(hi[0], i);
                hi[1] = std::max(hi[1], j);
                hi[2] = std::max(hi[2], k);
            }
        }
    }

    // prefix sums for O(1) block-occupancy queries
    std::vector<std::int64_t> ps(static_cast<std::size_t>((H + 1) * (W + 1) * (D + 1)), 0);
    auto ps_at = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> std::int64_t& {
        return ps[static_cast<std::size_t>((i * (W + 1) + j) * (D + 1) + k)];
    };
    for (std::int64_t i = 1; i <= H; ++i) {
        for (std::int64_t j = 1; j <= W; ++j) {
            for (std::int64_t k = 1; k <= D; ++k) {
                ps_at(i, j, k) = mask[static_cast<std::size_t>(((i - 1) * W + (j - 1)) * D + (k - 1))] +
                                 ps_at(i - 1, j, k) + ps_at(i, j - 1, k) + ps_at(i, j, k - 1) -
                                 ps_at(i - 1, j - 1, k) - ps_at(i - 1, j, k - 1) -
                                 ps_at(i, j - 1, k - 1) + ps_at(i - 1, j - 1, k - 1);
            }
        }
    }
    auto box_sum = [&](std::int64_t i0, std::int64_t j0, std::int64_t k0, std::int64_t s) {
        const std::int64_t i1 = i0 + s, j1 = j0 + s, k1 = k0 + s;
        return ps_at(i1, j1, k1) - ps_at(i0, j1, k1) - ps_at(i1, j0, k1) - ps_at(i1, j1, k0) +
               ps_at(i0, j0, k1) + ps_at(i0, j1, k0) + ps_at(i1, j0, k0) - ps_at(i0, j0, k0);
    };

    // tile the region with inward-shifted boundary blocks
    auto starts_for = [&](std::int64_t lo_v, std::int64_t hi_v, std::int64_t ext) {
        std::vector<std::int64_t> starts;
        const std::int64_t span = hi_v - lo_v + 1;
        const std::int64_t n = (span + block_side - 1) / block_side;
        for (std::int64_t q = 0; q < n; ++q) {
            std::int64_t s = lo_v + q * block_side;
            s = std::min(s, ext - block_side);
            s = std::max<std::int64_t>(s, 0);
            if (starts.empty() || starts.back() != s) starts.push_back(s);
        }
        return starts;
    };
    const auto sh = starts_for(lo[0], hi[0], H);
    const auto sw = starts_for(lo[1], hi[1], W);
    const auto sd = starts_for(lo[2], hi[2], D);

    ExtractResult res;
    for (std::int64_t i0 : sh) {
        for (std::int64_t j0 : sw) {
            for (std::int64_t k0 : sd) {
                if (box_sum(i0, j0, k0, block_side) == 0) continue;  // no dilated-mask voxel
                BlockIndex idx{i0, j0, k0, block_side, {H, W, D}};
                Volume blk(block_side, block_side, block_side);
                blk.spacing = original.spacing;
                for (std::int64_t i = 0; i < block_side; ++i) {
                    for (std::int64_t j = 0; j < block_side; ++j) {
                        for (std::int64_t k = 0; k < block_side; ++k) {
                            blk.at(i, j, k) = original.at(i0 + i, j0 + j, k0 + k);
                        }
                    }
                }
                res.blocks.emplace_back(idx, std::move(blk));
            }
        }
    }
    return res;
}

std::vector<std::pair<BlockIndex, Volume>> fine_segment_blocks(
    const std::vector<std::pair<BlockIndex, Volume>>& blocks, const Network& net) {
    std::vector<std::pair<BlockIndex, Volume>> out;
    out.reserve(blocks.size());
    for (const auto& [idx, blk] : blocks) {
        Tensor probs = net.forward(volume_to_tensor(blk));
        out.emplace_back(idx, tensor_to_volume(probs));
    }
    return out;
}

LabelVolume merge_blocks(const std::vector<std::pair<BlockIndex, Volume>>& pieces,
                         const std::array<std::int64_t, 3>& shape, double threshold) {
    LabelVolume out(shape[0], shape[1], shape[2]);
    std::vector<double> acc(static_cast<std::size_t>(out.numel()), 0.0);
    std::vector<std::int32_t> cnt(static_cast<std::size_t>(out.numel()), 0);
    for (const auto& [idx, blk] : pieces) {
        if (idx.h0 < 0 || idx.w0 < 0 || idx.d0 < 0 || idx.h0 + idx.side > shape[0] ||
            idx.w0 + idx.side > shape[1] || idx.d0 + idx.side > shape[2]) {
            throw ContractError("merge_blocks: block at (" + std::to_string(idx.h0) + "," +
                                std::to_string(idx.w0) + "," + std::to_string(idx.d0) +
                                ") exceeds the canvas");
        }
        if (blk.h != idx.side || blk.w != idx.side || blk.d != idx.side) {
            throw ContractError("merge_blocks: block data does not match its index extent");
        }
        for (std::int64_t i = 0; i < idx.side; ++i) {
            for (std::int64_t j = 0; j < idx.side; ++j) {
                for (std::int64_t k = 0; k < idx.side; ++k) {
                    const std::size_t at =
                        static_cast<std::size_t>(((idx.h0 + i) * shape[1] + idx.w0 + j) * shape[2] +
                                                 idx.d0 + k);
                    acc[at] += blk.at(i, j, k);
                    cnt[at] += 1;
                }
            }
        }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.data[i] = (cnt[i] > 0 && acc[i] / cnt[i] > threshold) ? 1 : 0;
    }
    return out;
}

TwoStageResult two_stage_infer(const Volume& v, const Network& net1, const Network& net2,
                               const TwoStageConfig& cfg) {
    const Volume normed = normalize_volume(v);
    const Volume coarse_in = downsample_volume(normed, cfg.coarse_h, cfg.coarse_w, cfg.coarse_d);
    const Volume coarse_probs = coarse_segment(coarse_in, net1);
    ExtractResult extracted = extract_blocks(coarse_probs, normed, cfg.threshold, cfg.block_side);
    TwoStageResult res;
    res.empty_guidance = extracted.empty_guidance;
    res.block_count = static_cast<std::int64_t>(extracted.blocks.size());
    if (extracted.blocks.empty()) {
        res.label = LabelVolume(v.h, v.w, v.d);
        res.label.spacing = v.spacing;
        return res;
    }
    auto fine = fine_segment_blocks(extracted.blocks, net2);
    res.label = merge_blocks(fine, {v.h, v.w, v.d}, cfg.threshold);
    res.label.spacing = v.spacing;
    return res;
}

}  // namespace mdsvm
