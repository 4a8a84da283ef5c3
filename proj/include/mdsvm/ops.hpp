#pragma once

#include <optional>

#include "mdsvm/tensor.hpp"

namespace mdsvm {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor neg(const Tensor& x);
// x^p elementwise for real p; x must be positive when p is non-integral.
Tensor pow_scalar(const Tensor& x, double p);
// a*x + b elementwise with scalar coefficients.
Tensor affine_scalar(const Tensor& x, double a, double b);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// ---- dense -----------------------------------------------------------------

// y[..., o] = sum_i x[..., i] * w[o, i] + b[o]; affine map over the trailing axis.
Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b = std::nullopt);
// x[..., c] * s[c]: per-feature scaling over the trailing axis.
Tensor scale_last(const Tensor& x, const Tensor& s);

// ---- spatial (B, C, H, W, D layout) ----------------------------------------

struct Conv3dOpts {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    int groups = 1;
};

Tensor conv3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv3dOpts& opts = {});
// groups == channels restriction of conv3d; weight is [C,1,k,k,k].
Tensor dwconv3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                int padding);
// Transposed conv, stride s, kernel k, no padding: out extent = (in-1)*s + k.
Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                        int stride);

// coords[b,m,{0,1,2}] are fractional (h,w,d) voxel coordinates. Out-of-range
// coordinates clamp to the border voxel, so gradients stay defined everywhere.
Tensor grid_sample_trilinear(const Tensor& input, const Tensor& coords);

// Scale-2 trilinear upsampling with half-pixel centers.
Tensor upsample_trilinear(const Tensor& x);
// 2x2x2 window, stride 2; extents must be even. Subgradient routes to the
// argmax, first index winning ties.
Tensor pool_max3d(const Tensor& x);

// Group normalization over (C/groups x spatial) per sample, epsilon 1e-5,
// per-channel affine.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& bias);
// Normalization over the trailing axis with per-feature affine.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// ---- fused deformable sampling ---------------------------------------------

// Snake-kernel application: coords is [B,T,3,H,W,D] holding per-tap fractional
// sample positions, weight is [Cout,Cin,T]. Each output location contracts the
// T border-clamped trilinear samples with the per-tap weights. Differentiable
// through features, coords, and weights.
Tensor snake_conv_apply(const Tensor& features, const Tensor& coords, const Tensor& weight,
                        const std::optional<Tensor>& bias);

// ---- selective scan ---------------------------------------------------------

// Per-channel SSM recurrence over a length-L sequence:
//   h_t = exp(delta_t[c] * A[c,:]) . h_{t-1} + delta_t[c] * B_t * u_t[c]
//   y_t[c] = <C_t, h_t> + D[c] * u_t[c]
// u, delta: [L,C]; Bt, Ct: [L,N]; A: [C,N]; D: [C]. Causal, linear in L.
Tensor selective_scan(const Tensor& u, const Tensor& Bt, const Tensor& Ct, const Tensor& delta,
                      const Tensor& A, const Tensor& D);

// Forward-only chunked reformulation of the same recurrence (associative
// composition of the per-step affine maps); must agree with the sequential
// path to tight tolerance.
std::vector<double> selective_scan_chunked(std::span<const double> u, std::span<const double> Bt,
                                           std::span<const double> Ct, std::span<const double> delta,
                                           std::span<const double> A, std::span<const double> D,
                                           std::int64_t L, std::int64_t C, std::int64_t N,
                                           std::int64_t chunk);

}  // namespace mdsvm
