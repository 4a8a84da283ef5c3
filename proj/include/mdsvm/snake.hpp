#pragma once

#include "mdsvm/ops.hpp"

namespace mdsvm {

// Kernel axis of a snake convolution. Taps march along the named spatial axis
// (X ~ H, Y ~ W, Z ~ D); the other two coordinates deform.
enum class SnakeAxis { X, Y, Z };

struct SnakeKernelSpec {
    SnakeAxis axis = SnakeAxis::X;
    int half_length = 4;  // c_max; tap count is 2*c_max + 1
    int in_channels = 1;
    int out_channels = 1;
    double offset_scale = 1.0;  // per-step offset bound

    int taps() const { return 2 * half_length + 1; }
};

struct SnakeBranch {
    SnakeKernelSpec spec;
    Tensor pred_w;  // [2T, Cin, 3, 3, 3]
    Tensor pred_b;  // [2T]
    Tensor w;       // [Cout, Cin, T]
    Tensor b;       // [Cout]
};

// Offset predictor: a 3x3x3 conv to 2T channels, tanh-bounded and scaled so
// every per-step offset lies in [-offset_scale, +offset_scale]. Channel 2t and
// 2t+1 hold the two off-axis per-step offsets of tap t. Zero predictor weights
// give exactly zero offsets.
Tensor predict_offsets(const Tensor& features, const SnakeKernelSpec& spec, const Tensor& pred_w,
                       const Tensor& pred_b);

// Outward cumulative summation from the center tap. Returns absolute sample
// coordinates [B,T,3,H,W,D]: the kernel-axis component of tap c_max+e is the
// grid point plus e exactly; off-axis components add the signed cumulative sum
// of per-step offsets (positive side sums taps c_max+1..c_max+e, negative side
// subtracts the sum over taps c_max-1..c_max-e).
Tensor cumulate_offsets(const Tensor& raw_offsets, const SnakeKernelSpec& spec);

// Full axis-specific snake convolution: predict, cumulate, sample, contract.
Tensor snake_conv_axis(const Tensor& features, const SnakeBranch& branch);

struct MdsConvBlock {
    int in_channels = 1;
    int out_channels = 1;
    int gn_groups = 1;
    Tensor std_w;  // [Cout, Cin, 3, 3, 3]
    Tensor std_b;  // [Cout]
    SnakeBranch branch_x, branch_y, branch_z;
    Tensor fuse_w;  // [Cout, 4*Cout, 1, 1, 1]
    Tensor fuse_b;  // [Cout]
    Tensor gn_gain, gn_bias;  // [Cout]
};

// Standard conv plus the three axis snakes, channel-concatenated, fused with a
// 1x1x1 conv, then GroupNorm and ReLU.
Tensor mdsconv_forward(const Tensor& features, const MdsConvBlock& block);

}  // namespace mdsvm
