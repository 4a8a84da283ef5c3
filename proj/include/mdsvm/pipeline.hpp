#pragma once

#include <utility>
#include <vector>

#include "mdsvm/network.hpp"
#include "mdsvm/volume.hpp"

namespace mdsvm {

// Placement record tying a cubic block back to its source volume.
struct BlockIndex {
    std::int64_t h0 = 0, w0 = 0, d0 = 0;
    std::int64_t side = 64;
    std::array<std::int64_t, 3> source_shape{0, 0, 0};
};

struct TwoStageConfig {
    std::int64_t coarse_h = 128, coarse_w = 128, coarse_d = 64;
    std::int64_t block_side = 64;
    double threshold = 0.5;
};

// Per-volume z-score normalization (the network input convention).
Volume normalize_volume(const Volume& v);

// Trilinear resampling with half-pixel centers to an arbitrary target shape.
Volume downsample_volume(const Volume& v, std::int64_t th, std::int64_t tw, std::int64_t td);
// Nearest-neighbor label resampling (preserves binarity).
LabelVolume downsample_label(const LabelVolume& v, std::int64_t th, std::int64_t tw, std::int64_t td);

// Forward pass over a whole (already downsampled, normalized) volume.
Volume coarse_segment(const Volume& v, const Network& net);

struct ExtractResult {
    std::vector<std::pair<BlockIndex, Volume>> blocks;
    bool empty_guidance = false;
};

// Thresholds the coarse probabilities, upscales the mask to the original
// grid, dilates it by one block side, tiles the dilated bounding region with
// non-overlapping cubes (boundary cubes shifted inward), and keeps the cubes
// that intersect the dilated mask. Deterministic lexicographic order.
ExtractResult extract_blocks(const Volume& coarse_probs, const Volume& original, double threshold,
                             std::int64_t block_side);

// Independent per-block forward passes.
std::vector<std::pair<BlockIndex, Volume>> fine_segment_blocks(
    const std::vector<std::pair<BlockIndex, Volume>>& blocks, const Network& net);

// Probabilities averaged by visit count on a zero canvas, then thresholded;
// voxels no block covers stay background.
LabelVolume merge_blocks(const std::vector<std::pair<BlockIndex, Volume>>& pieces,
                         const std::array<std::int64_t, 3>& shape, double threshold = 0.5);

struct TwoStageResult {
    LabelVolume label;
    bool empty_guidance = false;
    std::int64_t block_count = 0;
};

TwoStageResult two_stage_infer(const Volume& v, const Network& net1, const Network& net2,
                               const TwoStageConfig& cfg);

}  // namespace mdsvm
