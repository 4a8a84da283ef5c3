#pragma once

#include <array>
#include <cstdint>

#include "mdsvm/volume.hpp"

namespace mdsvm {

// Synthetic tubular-volume generator: seeded spline centerlines with binary
// branching, rasterized to a binary label and a smoothed noisy intensity.
struct SynthSpec {
    std::uint64_t seed = 1;
    std::int64_t h = 64, w = 64, d = 64;
    int tube_count = 2;
    int branch_depth = 1;
    double radius_min = 1.5;
    double radius_max = 3.0;
    double contrast = 1.0;
    double noise_sigma = 0.05;
    // the class-imbalance envelope the generator must land in
    double fg_min = 0.001;
    double fg_max = 0.02;
    std::array<float, 3> spacing{0.0f, 0.0f, 0.0f};
};

struct SynthCase {
    Volume intensity;
    LabelVolume label;
};

// Deterministic under spec.seed. Throws ContractError when the foreground
// fraction or tube separation cannot be met within bounded retries.
SynthCase synth_generate(const SynthSpec& spec);

// 26-connected component count; used to validate tube separation.
int connected_components_26(const LabelVolume& v);

}  // namespace mdsvm
