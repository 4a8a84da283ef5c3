#pragma once

#include <array>

#include "mdsvm/ops.hpp"

namespace mdsvm {

// Selective state-space parameter bundle. The state matrix is stored as
// log(-A) so that -A stays positive (decaying state) under any update; the
// step sizes go through softplus so they stay positive.
struct SsmParams {
    int n_state = 16;
    Tensor w_b;      // [N, Ce] projection producing B_t
    Tensor w_c;      // [N, Ce] projection producing C_t
    Tensor w_delta;  // [Ce, Ce]
    Tensor b_delta;  // [Ce]
    Tensor a_log;    // [Ce, N]; A = -exp(a_log)
    Tensor d_skip;   // [Ce]
    bool use_skip = true;
};

// Input-dependent scan over a [L, Ce] sequence: builds B_t, C_t, delta_t from
// x and runs the recurrence.
Tensor ssm_apply(const Tensor& x, const SsmParams& p);

struct VssmBlock {
    int expansion = 2;  // lambda
    Tensor w_in1, b_in1;  // [Ce, C], [Ce] -- SSM branch entry
    Tensor dw_w, dw_b;    // [Ce, 1, 3, 3, 3], [Ce] depthwise conv on re-spatialized features
    SsmParams ssm;
    Tensor ln_gain, ln_bias;  // [Ce] after the scan
    Tensor w_in2, b_in2;      // [Ce, C] gating branch entry
    Tensor w_out, b_out;      // [C, Ce]
};

// Dual-branch vision state space module on a [L, C] sequence; L must equal
// the product of spatial extents (the depthwise conv runs on the
// re-spatialized expanded features).
Tensor vssm_forward(const Tensor& seq, const VssmBlock& block,
                    const std::array<std::int64_t, 3>& spatial);

struct RvmLayer {
    Tensor ln_in_gain, ln_in_bias;  // [C]
    VssmBlock vssm;
    Tensor res_scale;  // [C], initialized to ones
    Tensor ln_post_gain, ln_post_bias;  // [C]
    Tensor proj_w, proj_b;  // [Cout, C]
};

// Residual visual Mamba layer on [B,C,H,W,D]: flatten each sample to (L,C),
// apply LN -> VSSM with a scaled residual, then LN -> projection, and reshape
// back to [B,Cout,H,W,D].
Tensor rvm_forward(const Tensor& x, const RvmLayer& layer);

}  // namespace mdsvm
