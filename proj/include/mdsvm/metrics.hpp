#pragma once

#include <array>
#include <vector>

#include "mdsvm/tensor.hpp"
#include "mdsvm/volume.hpp"

namespace mdsvm {

// Voxel-center coordinates (scaled by spacing when present) of foreground
// voxels with at least one six-connected background neighbor; voxels on the
// grid boundary count the outside as background. Lexicographic (h,w,d) order.
struct SurfacePointSet {
    std::vector<std::array<double, 3>> points;

    bool empty() const { return points.empty(); }
    std::size_t size() const { return points.size(); }
};

SurfacePointSet extract_surface(const LabelVolume& v);

// 2|A∩B| / (|A|+|B|); defined as 1 when both masks are empty.
double dice_coefficient(const LabelVolume& a, const LabelVolume& b);

// Soft Dice loss over probabilities with additive smoothing:
// 1 - (2*sum(p*g) + s) / (sum(p) + sum(g) + s). Differentiable through probs.
Tensor dice_loss(const Tensor& probs, const LabelVolume& target, double smooth = 1.0);

// Mean over voxels of -alpha_t * (1-p_t)^gamma * log(p_t).
Tensor focal_loss(const Tensor& probs, const LabelVolume& target, double gamma = 2.0,
                  double alpha = 0.25);

// Exact max-min Euclidean surface distance. The default path uses an exact
// nearest-neighbor index; the brute-force variants are the O(|A|*|B|) oracle.
// Both compute squared distances identically, so they agree bit-for-bit
// before the final square root. Empty surfaces raise UndefinedMetricError.
double hausdorff(const LabelVolume& a, const LabelVolume& b);
double hausdorff_bruteforce(const LabelVolume& a, const LabelVolume& b);

// max of the two directed means of point-to-nearest-surface distances.
double average_hausdorff(const LabelVolume& a, const LabelVolume& b);
double average_hausdorff_bruteforce(const LabelVolume& a, const LabelVolume& b);

}  // namespace mdsvm
