#include "mdsvm/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mdsvm/ops.hpp"

namespace mdsvm {

namespace {

void check_same_grid(const char* op, const LabelVolume& a, const LabelVolume& b) {
    if (a.h != b.h || a.w != b.w || a.d != b.d) {
        throw ShapeError(std::string(op) + ": volume shapes disagree");
    }
}

inline double dist2(const std::array<double, 3>& p, const std::array<double, 3>& q) {
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    const double dz = p[2] - q[2];
    return dx * dx + dy * dy + dz * dz;
}

// Exact nearest-neighbor search over a kd-tree. Pruning uses strict
// comparisons, so the returned squared distance equals the true minimum and
// matches the brute-force scan bit-for-bit.
class KdTree {
public:
    explicit KdTree(const std::vector<std::array<double, 3>>& pts) : pts_(pts) {
        idx_.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) idx_[i] = i;
        build(0, static_cast<std::int64_t>(pts.size()), 0);
    }

    double min_dist2(const std::array<double, 3>& q) const {
        double best = std::numeric_limits<double>::infinity();
        query(q, 0, static_cast<std::int64_t>(pts_.size()), 0, best);
        return best;
    }

private:
    void build(std::int64_t lo, std::int64_t hi, int axis) {
        if (hi - lo <= 1) return;
        const std::int64_t mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](std::size_t a, std::size_t b) { return pts_[a][axis] < pts_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void query(const std::array<double, 3>& q, std::int64_t lo, std::int64_t hi, int axis,
               double& best) const {
        if (hi <= lo) return;
        const std::int64_t mid = (lo + hi) / 2;
        const auto& p = pts_[idx_[mid]];
        best = std::min(best, dist2(q, p));
        const double split = p[axis] - q[axis];
        const std::int64_t near_lo = split > 0.0 ? lo : mid + 1;
        const std::int64_t near_hi = split > 0.0 ? mid : hi;
        const std::int64_t far_lo = split > 0.0 ? mid + 1 : lo;
        const std::int64_t far_hi = split > 0.0 ? hi : mid;
        query(q, near_lo, near_hi, (axis + 1) % 3, best);
        if (split * split <= best) query(q, far_lo, far_hi, (axis + 1) % 3, best);
    }

    const std::vector<std::array<double, 3>>& pts_;
    std::vector<std::size_t> idx_;
};

double brute_min_dist2(const std::array<double, 3>& q, const std::vector<std::array<double, 3>>& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) best = std::min(best, dist2(q, p));
    return best;
}

struct SurfacePair {
    SurfacePointSet a, b;
};

SurfacePair surfaces_checked(const char* op, const LabelVolume& a, const LabelVolume& b) {
    check_same_grid(op, a, b);
    SurfacePair s{extract_surface(a), extract_surface(b)};
    if (s.a.empty() || s.b.empty()) {
        throw UndefinedMetricError(std::string(op) + ": undefined for an empty surface set");
    }
    return s;
}

template <typename MinDist2>
double directed_max(const SurfacePointSet& from, MinDist2 min2) {
    double m = 0.0;
    for (const auto& p : from.points) m = std::max(m, min2(p));
    return m;
}

template <typename MinDist2>
double directed_mean(const SurfacePointSet& from, MinDist2 min2) {
    double s = 0.0;
    for (const auto& p : from.points) s += std::sqrt(min2(p));
    return s / static_cast<double>(from.size());
}

}  // namespace

SurfacePointSet extract_surface(const LabelVolume& v) {
    SurfacePointSet out;
    const double sx = v.spacing[0] > 0 ? v.spacing[0] : 1.0;
    const double sy = v.spacing[1] > 0 ? v.spacing[1] : 1.0;
    const double sz = v.spacing[2] > 0 ? v.spacing[2] : 1.0;
    auto bg = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        if (i < 0 || j < 0 || k < 0 || i >= v.h || j >= v.w || k >= v.d) return true;
        return v.at(i, j, k) == 0;
    };
    for (std::int64_t i = 0; i < v.h; ++i) {
        for (std::int64_t j = 0; j < v.w; ++j) {
            for (std::int64_t k = 0; k < v.d; ++k) {
                if (!v.at(i, j, k)) continue;
                if (bg(i - 1, j, k) || bg(i + 1, j, k) || bg(i, j - 1, k) || bg(i, j + 1, k) ||
                    bg(i, j, k - 1) || bg(i, j, k + 1)) {
                    out.points.push_back({static_cast<double>(i) * sx, static_cast<double>(j) * sy,
                                          static_cast<double>(k) * sz});
                }
            }
        }
    }
    return out;
}

double dice_coefficient(const LabelVolume& a, const LabelVolume& b) {
    check_same_grid("dice_coefficient", a, b);
    std::int64_t inter = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] & b.data[i];
        ca += a.data[i];
        cb += b.data[i];
    }
    if (ca + cb == 0) return 1.0;  // both empty
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

namespace {

Tensor target_constant(const Tensor& probs, const LabelVolume& target) {
    if (probs.numel() != target.numel()) {
        throw ShapeError("loss: probability tensor has " + std::to_string(probs.numel()) +
                         " voxels, target has " + std::to_string(target.numel()));
    }
    std::vector<double> g(static_cast<std::size_t>(target.numel()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (target.data[i] > 1) throw ContractError("loss: target must be binary");
        g[i] = static_cast<double>(target.data[i]);
    }
    return Tensor::from_data(probs.shape(), std::move(g));
}

void check_probs_range(const Tensor& probs, bool strict) {
    for (double p : probs.values()) {
        const bool bad = strict ? (p <= 0.0 || p >= 1.0) : (p < 0.0 || p > 1.0);
        if (bad || !std::isfinite(p)) {
            throw ContractError("loss: probabilities must lie in (0,1)");
        }
    }
}

}  // namespace

Tensor dice_loss(const Tensor& probs, const LabelVolume& target, double smooth) {
    check_probs_range(probs, /*strict=*/false);
    Tensor g = target_constant(probs, target);
    Tensor inter = sum(hadamard(probs, g));
    Tensor denom = add(sum(probs), sum(g));
    Tensor ratio = divide(affine_scalar(inter, 2.0, smooth), affine_scalar(denom, 1.0, smooth));
    return affine_scalar(ratio, -1.0, 1.0);
}

Tensor focal_loss(const Tensor& probs, const LabelVolume& target, double gamma, double alpha) {
    check_probs_range(probs, /*strict=*/true);
    Tensor g = target_constant(probs, target);
    // p_t = g*p + (1-g)*(1-p) = (1-g) + (2g-1)*p, built from constants
    std::vector<double> c0(static_cast<std::size_t>(g.numel()));
    std::vector<double> c1(static_cast<std::size_t>(g.numel()));
    std::vector<double> at(static_cast<std::size_t>(g.numel()));
    for (std::int64_t i = 0; i < g.numel(); ++i) {
        const double gv = g.values()[i];
        c0[static_cast<std::size_t>(i)] = 1.0 - gv;
        c1[static_cast<std::size_t>(i)] = 2.0 * gv - 1.0;
        at[static_cast<std::size_t>(i)] = alpha * gv + (1.0 - alpha) * (1.0 - gv);
    }
    Tensor pt = add(Tensor::from_data(probs.shape(), std::move(c0)),
                    hadamard(Tensor::from_data(probs.shape(), std::move(c1)), probs));
    Tensor focal_w = pow_scalar(affine_scalar(pt, -1.0, 1.0), gamma);  // (1-p_t)^gamma
    Tensor term = hadamard(Tensor::from_data(probs.shape(), std::move(at)),
                           hadamard(focal_w, neg(log_op(pt))));
    return mean(term);
}

double hausdorff(const LabelVolume& a, const LabelVolume& b) {
    const SurfacePair s = surfaces_checked("hausdorff", a, b);
    KdTree ta(s.a.points), tb(s.b.points);
    const double hab = directed_max(s.a, [&](const auto& p) { return tb.min_dist2(p); });
    const double hba = directed_max(s.b, [&](const auto& p) { return ta.min_dist2(p); });
    return std::sqrt(std::max(hab, hba));
}

double hausdorff_bruteforce(const LabelVolume& a, const LabelVolume& b) {
    const SurfacePair s = surfaces_checked("hausdorff", a, b);
    const double hab = directed_max(s.a, [&](const auto& p) { return brute_min_dist2(p, s.b.points); });
    const double hba = directed_max(s.b, [&](const auto& p) { return brute_min_dist2(p, s.a.points); });
    return std::sqrt(std::max(hab, hba));
}

double average_hausdorff(const LabelVolume& a, const LabelVolume& b) {
    const SurfacePair s = surfaces_checked("average_hausdorff", a, b);
    KdTree ta(s.a.points), tb(s.b.points);
    const double mab = directed_mean(s.a, [&](const auto& p) { return tb.min_dist2(p); });
    const double mba = directed_mean(s.b, [&](const auto& p) { return ta.min_dist2(p); });
    return std::max(mab, mba);
}

double average_hausdorff_bruteforce(const LabelVolume& a, const LabelVolume& b) {
    const SurfacePair s = surfaces_checked("average_hausdorff", a, b);
    const double mab = directed_mean(s.a, [&](const auto& p) { return brute_min_dist2(p, s.b.points); });
    const double mba = directed_mean(s.b, [&](const auto& p) { return brute_min_dist2(p, s.a.points); });
    return std::max(mab, mba);
}

}  // namespace mdsvm
