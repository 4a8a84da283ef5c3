#include "mdsvm/snake.hpp"

namespace mdsvm {

namespace {

// Constant (non-differentiable) tensor holding one spatial coordinate plus a
// fixed shift, shaped [B,1,1,H,W,D] for concatenation into tap coordinates.
Tensor coordinate_grid(std::int64_t B, std::int64_t H, std::int64_t W, std::int64_t D, int component,
                       double shift) {
    Tensor t = Tensor::zeros({B, 1, 1, H, W, D});
    auto v = t.mutable_values();
    std::int64_t i = 0;
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t h = 0; h < H; ++h) {
            for (std::int64_t w = 0; w < W; ++w) {
                for (std::int64_t d = 0; d < D; ++d, ++i) {
                    const double c = component == 0 ? static_cast<double>(h)
                                   : component == 1 ? static_cast<double>(w)
                                                    : static_cast<double>(d);
                    v[i] = c + shift;
                }
            }
        }
    }
    return t;
}

}  // namespace

Tensor predict_offsets(const Tensor& features, const SnakeKernelSpec& spec, const Tensor& pred_w,
                       const Tensor& pred_b) {
    const int T = spec.taps();
    if (pred_w.dim() != 5 || pred_w.extent(0) != 2 * T) {
        throw ShapeError("predict_offsets: predictor weight must have " + std::to_string(2 * T) +
                         " output channels");
    }
    Conv3dOpts opts;
    opts.padding = 1;
    Tensor raw = conv3d(features, pred_w, pred_b, opts);
    return affine_scalar(tanh_op(raw), spec.offset_scale, 0.0);
}

Tensor cumulate_offsets(const Tensor& raw_offsets, const SnakeKernelSpec& spec) {
    const int T = spec.taps();
    const int c_max = spec.half_length;
    if (raw_offsets.dim() != 5 || raw_offsets.extent(1) != 2 * T) {
        throw ShapeError("cumulate_offsets: offsets must be [B," + std::to_string(2 * T) +
                         ",H,W,D], got " + shape_str(raw_offsets.shape()));
    }
    const std::int64_t B = raw_offsets.extent(0);
    const std::int64_t H = raw_offsets.extent(2);
    const std::int64_t W = raw_offsets.extent(3);
    const std::int64_t D = raw_offsets.extent(4);

    auto step = [&](int tap, int pair) { return slice(raw_offsets, 1, 2 * tap + pair, 1); };

    // Signed cumulative displacement per tap, indexed by tap offset e in
    // [-c_max, c_max], for each of the two deforming components.
    std::vector<Tensor> disp_a(static_cast<std::size_t>(T));
    std::vector<Tensor> disp_b(static_cast<std::size_t>(T));
    Tensor zero = Tensor::zeros({B, 1, H, W, D});
    disp_a[c_max] = zero;
    disp_b[c_max] = zero;
    Tensor pos_a = zero, pos_b = zero, neg_a = zero, neg_b = zero;
    for (int e = 1; e <= c_max; ++e) {
        pos_a = add(pos_a, step(c_max + e, 0));
        pos_b = add(pos_b, step(c_max + e, 1));
        disp_a[c_max + e] = pos_a;
        disp_b[c_max + e] = pos_b;
        neg_a = add(neg_a, step(c_max - e, 0));
        neg_b = add(neg_b, step(c_max - e, 1));
        disp_a[c_max - e] = neg(neg_a);
        disp_b[c_max - e] = neg(neg_b);
    }

    // Per-axis component roles: the kernel-axis coordinate is rigid, the two
    // others receive the cumulative displacements.
    int axis_comp, comp_a, comp_b;
    switch (spec.axis) {
        case SnakeAxis::X: axis_comp = 0; comp_a = 1; comp_b = 2; break;
        case SnakeAxis::Y: axis_comp = 1; comp_a = 0; comp_b = 2; break;
        default:           axis_comp = 2; comp_a = 0; comp_b = 1; break;
    }

    std::vector<Tensor> taps;
    taps.reserve(static_cast<std::size_t>(T));
    const Shape comp_shape{B, 1, 1, H, W, D};
    for (int t = 0; t < T; ++t) {
        const double e = static_cast<double>(t - c_max);
        Tensor comps[3];
        comps[axis_comp] = coordinate_grid(B, H, W, D, axis_comp, e);
        comps[comp_a] = add(coordinate_grid(B, H, W, D, comp_a, 0.0),
                            reshape(disp_a[static_cast<std::size_t>(t)], comp_shape));
        comps[comp_b] = add(coordinate_grid(B, H, W, D, comp_b, 0.0),
                            reshape(disp_b[static_cast<std::size_t>(t)], comp_shape));
        taps.push_back(concat({comps[0], comps[1], comps[2]}, 2));
    }
    return concat(taps, 1);
}

Tensor snake_conv_axis(const Tensor& features, const SnakeBranch& branch) {
    Tensor raw = predict_offsets(features, branch.spec, branch.pred_w, branch.pred_b);
    Tensor coords = cumulate_offsets(raw, branch.spec);
    return snake_conv_apply(features, coords, branch.w, branch.b);
}

Tensor mdsconv_forward(const Tensor& features, const MdsConvBlock& block) {
    Conv3dOpts pad1;
    pad1.padding = 1;
    Tensor std_branch = conv3d(features, block.std_w, block.std_b, pad1);
    Tensor sx = snake_conv_axis(features, block.branch_x);
    Tensor sy = snake_conv_axis(features, block.branch_y);
    Tensor sz = snake_conv_axis(features, block.branch_z);
    Tensor cat = concat({std_branch, sx, sy, sz}, 1);
    Tensor fused = conv3d(cat, block.fuse_w, block.fuse_b, {});
    return relu(group_norm(fused, block.gn_groups, block.gn_gain, block.gn_bias));
}

}  // namespace mdsvm
