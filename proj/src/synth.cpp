#include "mdsvm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "mdsvm/rng.hpp"

namespace mdsvm {

namespace {

struct Vec3 {
    double x, y, z;
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Catmull-Rom segment between p1 and p2.
Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
    const double t2 = t * t, t3 = t2 * t;
    auto comp = [&](double a, double b, double c, double d) {
        return 0.5 * ((2.0 * b) + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 +
                      (-a + 3.0 * b - 3.0 * c + d) * t3);
    };
    return {comp(p0.x, p1.x, p2.x, p3.x), comp(p0.y, p1.y, p2.y, p3.y), comp(p0.z, p1.z, p2.z, p3.z)};
}

struct PathPoint {
    Vec3 p;
    double r;
};

// Densely sampled centerline through random control points drifting across
// the volume, plus recursively attached branches.
void trace_tube(Rng& rng, const SynthSpec& spec, Vec3 start, Vec3 dir, double radius, int depth,
                std::vector<PathPoint>& out) {
    const double margin = spec.radius_max + 2.0;
    const int n_ctrl = 4 + static_cast<int>(rng.index(3));
    const double lo[3] = {margin, margin, margin};
    const double hi[3] = {static_cast<double>(spec.h) - 1.0 - margin,
                          static_cast<double>(spec.w) - 1.0 - margin,
                          static_cast<double>(spec.d) - 1.0 - margin};
    const double step_len =
        0.22 * std::min({static_cast<double>(spec.h), static_cast<double>(spec.w),
                         static_cast<double>(spec.d)});
    std::vector<Vec3> ctrl{start};
    Vec3 cur = start;
    Vec3 d = dir;
    for (int i = 1; i < n_ctrl; ++i) {
        // drift the direction, renormalize, then march
        d = d + Vec3{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
        const double n = d.norm();
        if (n > 1e-9) d = d * (1.0 / n);
        cur = cur + d * step_len;
        cur.x = std::clamp(cur.x, lo[0], hi[0]);
        cur.y = std::clamp(cur.y, lo[1], hi[1]);
        cur.z = std::clamp(cur.z, lo[2], hi[2]);
        ctrl.push_back(cur);
    }
    const double r_end = std::clamp(radius * rng.uniform(0.7, 1.0), spec.radius_min, spec.radius_max);
    std::vector<std::size_t> path_begin{out.size()};
    const int segs = static_cast<int>(ctrl.size()) - 1;
    for (int s = 0; s < segs; ++s) {
        const Vec3& p0 = ctrl[static_cast<std::size_t>(std::max(0, s - 1))];
        const Vec3& p1 = ctrl[static_cast<std::size_t>(s)];
        const Vec3& p2 = ctrl[static_cast<std::size_t>(s + 1)];
        const Vec3& p3 = ctrl[static_cast<std::size_t>(std::min(segs, s + 2))];
        const double seg_len = std::max(1e-6, (p2 - p1).norm());
        const int steps = std::max(2, static_cast<int>(std::ceil(seg_len / (0.35 * spec.radius_min))));
        for (int k = 0; k < steps; ++k) {
            const double t_seg = static_cast<double>(k) / steps;
            const double t_glob = (s + t_seg) / segs;
            out.push_back({catmull_rom(p0, p1, p2, p3, t_seg), radius + (r_end - radius) * t_glob});
        }
    }
    if (depth > 0) {
        // binary branching: up to two children rooted on this path
        const std::size_t path_len = out.size() - path_begin[0];
        const int n_children = 1 + static_cast<int>(rng.index(2));
        for (int c = 0; c < n_children; ++c) {
            const std::size_t pick = path_begin[0] + path_len / 4 + rng.index(std::max<std::int64_t>(1, 3 * path_len / 4));
            const PathPoint root = out[std::min(pick, out.size() - 1)];
            Vec3 bdir{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            const double n = bdir.norm();
            if (n > 1e-9) bdir = bdir * (1.0 / n);
            const double brad = std::clamp(root.r * rng.uniform(0.6, 0.9), spec.radius_min, spec.radius_max);
            trace_tube(rng, spec, root.p, bdir, brad, depth - 1, out);
        }
    }
}

void stamp(LabelVolume& lbl, const std::vector<PathPoint>& path) {
    for (const auto& pp : path) {
        const double r = pp.r;
        const double r2 = r * r;
        const std::int64_t i0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(pp.p.x - r)));
        const std::int64_t i1 = std::min(lbl.h - 1, static_cast<std::int64_t>(std::ceil(pp.p.x + r)));
        const std::int64_t j0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(pp.p.y - r)));
        const std::int64_t j1 = std::min(lbl.w - 1, static_cast<std::int64_t>(std::ceil(pp.p.y + r)));
        const std::int64_t k0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(pp.p.z - r)));
        const std::int64_t k1 = std::min(lbl.d - 1, static_cast<std::int64_t>(std::ceil(pp.p.z + r)));
        for (std::int64_t i = i0; i <= i1; ++i) {
            const double dx = static_cast<double>(i) - pp.p.x;
            for (std::int64_t j = j0; j <= j1; ++j) {
                const double dy = static_cast<double>(j) - pp.p.y;
                for (std::int64_t k = k0; k <= k1; ++k) {
                    const double dz = static_cast<double>(k) - pp.p.z;
                    if (dx * dx + dy * dy + dz * dz <= r2) lbl.at(i, j, k) = 1;
                }
            }
        }
    }
}

// Separable 3-tap smoothing of the label for the intensity image.
std::vector<float> smooth_label(const LabelVolume& lbl) {
    const std::int64_t H = lbl.h, W = lbl.w, D = lbl.d;
    std::vector<float> a(static_cast<std::size_t>(H * W * D));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(lbl.data[i]);
    std::vector<float> b(a.size());
    auto pass = [&](const std::vector<float>& src, std::vector<float>& dst, int axis) {
        const std::int64_t ext[3] = {H, W, D};
        const std::int64_t stride[3] = {W * D, D, 1};
        const std::int64_t n = ext[axis];
        const std::int64_t s = stride[axis];
        for (std::int64_t i = 0; i < H; ++i) {
            for (std::int64_t j = 0; j < W; ++j) {
                for (std::int64_t k = 0; k < D; ++k) {
                    const std::int64_t base = (i * W + j) * D + k;
                    const std::int64_t pos = axis == 0 ? i : axis == 1 ? j : k;
                    const float c = src[base];
                    const float m = pos > 0 ? src[base - s] : c;
                    const float p = pos < n - 1 ? src[base + s] : c;
                    dst[base] = 0.25f * m + 0.5f * c + 0.25f * p;
                }
            }
        }
    };
    pass(a, b, 0);
    pass(b, a, 1);
    pass(a, b, 2);
    return b;
}

}  // namespace

int connected_components_26(const LabelVolume& v) {
    std::vector<std::uint8_t> seen(v.data.size(), 0);
    int comps = 0;
    std::deque<std::int64_t> queue;
    for (std::int64_t start = 0; start < v.numel(); ++start) {
        if (!v.data[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
        ++comps;
        seen[static_cast<std::size_t>(start)] = 1;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::int64_t cur = queue.front();
            queue.pop_front();
            const std::int64_t i = cur / (v.w * v.d);
            const std::int64_t j = (cur / v.d) % v.w;
            const std::int64_t k = cur % v.d;
            for (std::int64_t di = -1; di <= 1; ++di) {
                for (std::int64_t dj = -1; dj <= 1; ++dj) {
                    for (std::int64_t dk = -1; dk <= 1; ++dk) {
                        if (!di && !dj && !dk) continue;
                        const std::int64_t ni = i + di, nj = j + dj, nk = k + dk;
                        if (ni < 0 || nj < 0 || nk < 0 || ni >= v.h || nj >= v.w || nk >= v.d) continue;
                        const std::int64_t idx = (ni * v.w + nj) * v.d + nk;
                        if (v.data[static_cast<std::size_t>(idx)] && !seen[static_cast<std::size_t>(idx)]) {
                            seen[static_cast<std::size_t>(idx)] = 1;
                            queue.push_back(idx);
                        }
                    }
                }
            }
        }
    }
    return comps;
}

SynthCase synth_generate(const SynthSpec& spec) {
    if (spec.radius_min < 1.0) throw ConfigError("synth: radii must be >= 1 voxel");
    if (spec.radius_max < spec.radius_min) throw ConfigError("synth: radius_max < radius_min");
    if (spec.tube_count < 1) throw ConfigError("synth: tube_count must be positive");
    Rng rng(spec.seed);
    const int max_attempts = 25;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        LabelVolume lbl(spec.h, spec.w, spec.d);
        lbl.spacing = spec.spacing;
        bool tubes_ok = true;
        for (int tube = 0; tube < spec.tube_count && tubes_ok; ++tube) {
            bool placed = false;
            for (int t_try = 0; t_try < 12 && !placed; ++t_try) {
                const double margin = spec.radius_max + 2.0;
                Vec3 start{rng.uniform(margin, spec.h - 1 - margin),
                           rng.uniform(margin, spec.w - 1 - margin),
                           rng.uniform(margin, spec.d - 1 - margin)};
                Vec3 dir{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
                const double n = dir.norm();
                if (n > 1e-9) dir = dir * (1.0 / n);
                const double radius = rng.uniform(spec.radius_min, spec.radius_max);
                std::vector<PathPoint> path;
                trace_tube(rng, spec, start, dir, radius, spec.branch_depth, path);
                LabelVolume trial = lbl;
                stamp(trial, path);
                // the new tube must form its own 26-connected component
                if (connected_components_26(trial) == tube + 1) {
                    lbl = std::move(trial);
                    placed = true;
                }
            }
            tubes_ok = placed;
        }
        if (!tubes_ok) continue;
        const double frac =
            static_cast<double>(lbl.foreground_count()) / static_cast<double>(lbl.numel());
        if (frac < spec.fg_min || frac > spec.fg_max) continue;

        Volume img(spec.h, spec.w, spec.d);
        img.spacing = spec.spacing;
        auto smoothed = smooth_label(lbl);
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            img.data[i] = static_cast<float>(spec.contrast) * smoothed[i] +
                          static_cast<float>(spec.noise_sigma * rng.normal());
        }
        return {std::move(img), std::move(lbl)};
    }
    throw ContractError("synth: could not satisfy foreground-fraction and separation constraints after " +
                        std::to_string(max_attempts) + " attempts");
}

}  // namespace mdsvm
