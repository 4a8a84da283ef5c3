#include <cmath>

#include "doctest.h"
#include "mdsvm/gradcheck.hpp"
#include "mdsvm/snake.hpp"
#include "test_helpers.hpp"

using namespace mdsvm;
using namespace mdsvm::testutil;

namespace {

// Independent straight 1D convolution along the kernel axis with border-clamp
// padding; the degenerate (zero-offset) snake conv must match it.
Tensor straight_axis_conv_ref(const Tensor& x, const Tensor& w, const Tensor& b, SnakeAxis axis,
                              int c_max) {
    const std::int64_t B = x.extent(0), Cin = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3), D = x.extent(4);
    const std::int64_t Cout = w.extent(0);
    const std::int64_t T = 2 * c_max + 1;
    Tensor out = Tensor::zeros({B, Cout, H, W, D});
    auto ov = out.mutable_values();
    auto clampi = [](std::int64_t v, std::int64_t hi) { return std::min(std::max<std::int64_t>(v, 0), hi); };
    std::int64_t i = 0;
    for (std::int64_t bb = 0; bb < B; ++bb) {
        for (std::int64_t co = 0; co < Cout; ++co) {
            for (std::int64_t h = 0; h < H; ++h) {
                for (std::int64_t ww = 0; ww < W; ++ww) {
                    for (std::int64_t d = 0; d < D; ++d, ++i) {
                        double acc = b.values()[co];
                        for (std::int64_t ci = 0; ci < Cin; ++ci) {
                            for (std::int64_t t = 0; t < T; ++t) {
                                const std::int64_t e = t - c_max;
                                std::int64_t hh = h, ww2 = ww, dd = d;
                                if (axis == SnakeAxis::X) hh = clampi(h + e, H - 1);
                                if (axis == SnakeAxis::Y) ww2 = clampi(ww + e, W - 1);
                                if (axis == SnakeAxis::Z) dd = clampi(d + e, D - 1);
                                acc += x.at({bb, ci, hh, ww2, dd}) * w.at({co, ci, t});
                            }
                        }
                        ov[i] = acc;
                    }
                }
            }
        }
    }
    return out;
}

SnakeBranch make_branch(SnakeAxis axis, int c_max, int cin, int cout, Rng& rng, bool zero_pred) {
    SnakeBranch br;
    br.spec.axis = axis;
    br.spec.half_length = c_max;
    br.spec.in_channels = cin;
    br.spec.out_channels = cout;
    const int T = br.spec.taps();
    br.pred_w = zero_pred ? Tensor::zeros({2 * T, cin, 3, 3, 3}, true)
                          : random_tensor({2 * T, cin, 3, 3, 3}, rng, -0.3, 0.3);
    br.pred_b = zero_pred ? Tensor::zeros({2 * T}, true) : random_tensor({2 * T}, rng, -0.2, 0.2);
    br.w = random_tensor({cout, cin, T}, rng, -0.5, 0.5);
    br.b = random_tensor({cout}, rng, -0.2, 0.2);
    return br;
}

Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(static_cast<std::size_t>(t.numel()));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    return sum(hadamard(t, Tensor::from_data(t.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("zero predictor weights give exactly zero offsets") {
    Rng rng(21);
    SnakeKernelSpec spec;
    spec.half_length = 4;
    Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, -2.0, 2.0, false);
    Tensor pw = Tensor::zeros({18, 2, 3, 3, 3});
    Tensor pb = Tensor::zeros({18});
    Tensor off = predict_offsets(x, spec, pw, pb);
    for (double v : off.values()) CHECK(v == 0.0);
}

TEST_CASE("offsets are bounded by offset_scale") {
    Rng rng(22);
    SnakeKernelSpec spec;
    spec.half_length = 4;
    spec.offset_scale = 0.7;
    Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, -10.0, 10.0, false);
    Tensor pw = random_tensor({18, 2, 3, 3, 3}, rng, -5.0, 5.0, false);
    Tensor pb = random_tensor({18}, rng, -5.0, 5.0, false);
    Tensor off = predict_offsets(x, spec, pw, pb);
    for (double v : off.values()) CHECK(std::abs(v) <= 0.7);
}

TEST_CASE("cumulate_offsets: zero offsets give the undeformed stencil") {
    SnakeKernelSpec spec;
    spec.axis = SnakeAxis::X;
    spec.half_length = 2;
    const std::int64_t H = 3, W = 3, D = 3;
    Tensor raw = Tensor::zeros({1, 10, H, W, D});
    Tensor coords = cumulate_offsets(raw, spec);
    CHECK(coords.shape() == Shape{1, 5, 3, H, W, D});
    for (std::int64_t t = 0; t < 5; ++t) {
        for (std::int64_t h = 0; h < H; ++h) {
            for (std::int64_t w = 0; w < W; ++w) {
                for (std::int64_t d = 0; d < D; ++d) {
                    CHECK(coords.at({0, t, 0, h, w, d}) == static_cast<double>(h + t - 2));
                    CHECK(coords.at({0, t, 1, h, w, d}) == static_cast<double>(w));
                    CHECK(coords.at({0, t, 2, h, w, d}) == static_cast<double>(d));
                }
            }
        }
    }
}

TEST_CASE("cumulate_offsets: constant per-step 0.5 unrolls to (-1,-0.5,0,0.5,1)") {
    SnakeKernelSpec spec;
    spec.axis = SnakeAxis::X;
    spec.half_length = 2;
    // channel pairs (dy, dz) per tap; dy = 0.5 everywhere, dz = 0
    Tensor raw = Tensor::zeros({1, 10, 1, 1, 1});
    {
        auto v = raw.mutable_values();
        for (int t = 0; t < 5; ++t) v[static_cast<std::size_t>(2 * t)] = 0.5;
    }
    Tensor coords = cumulate_offsets(raw, spec);
    const double expect[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    for (int t = 0; t < 5; ++t) {
        CHECK(coords.at({0, t, 1, 0, 0, 0}) == doctest::Approx(expect[t]).epsilon(1e-15));
        CHECK(coords.at({0, t, 2, 0, 0, 0}) == 0.0);
        CHECK(coords.at({0, t, 0, 0, 0, 0}) == static_cast<double>(t - 2));
    }
}

TEST_CASE("cumulative displacement never exceeds c_max * offset_scale; taps stay continuous") {
    Rng rng(23);
    SnakeKernelSpec spec;
    spec.axis = SnakeAxis::Y;
    spec.half_length = 4;
    spec.offset_scale = 1.0;
    const int T = spec.taps();
    Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, -3.0, 3.0, false);
    Tensor pw = random_tensor({2 * T, 2, 3, 3, 3}, rng, -2.0, 2.0, false);
    Tensor pb = random_tensor({2 * T}, rng, -1.0, 1.0, false);
    Tensor coords = cumulate_offsets(predict_offsets(x, spec, pw, pb), spec);
    const double bound = spec.half_length * spec.offset_scale + 1e-12;
    for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t h = 0; h < 4; ++h) {
            for (std::int64_t w = 0; w < 4; ++w) {
                for (std::int64_t d = 0; d < 4; ++d) {
                    // axis Y: W is rigid, H and D deform
                    CHECK(std::abs(coords.at({0, t, 0, h, w, d}) - h) <= bound);
                    CHECK(coords.at({0, t, 1, h, w, d}) == static_cast<double>(w + t - 4));
                    CHECK(std::abs(coords.at({0, t, 2, h, w, d}) - d) <= bound);
                    if (t > 0) {
                        // attention continuity between neighbouring taps
                        for (int comp = 0; comp < 3; ++comp) {
                            const double step = std::abs(coords.at({0, t, comp, h, w, d}) -
                                                         coords.at({0, t - 1, comp, h, w, d}));
                            CHECK(step <= 1.0 + spec.offset_scale + 1e-12);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("center tap samples the undeformed location regardless of offsets") {
    Rng rng(24);
    SnakeKernelSpec spec;
    spec.axis = SnakeAxis::Z;
    spec.half_length = 3;
    const int T = spec.taps();
    Tensor raw = random_tensor({1, 2 * T, 3, 3, 3}, rng, -1.0, 1.0, false);
    Tensor coords = cumulate_offsets(raw, spec);
    for (std::int64_t h = 0; h < 3; ++h) {
        for (std::int64_t w = 0; w < 3; ++w) {
            for (std::int64_t d = 0; d < 3; ++d) {
                CHECK(coords.at({0, 3, 0, h, w, d}) == static_cast<double>(h));
                CHECK(coords.at({0, 3, 1, h, w, d}) == static_cast<double>(w));
                CHECK(coords.at({0, 3, 2, h, w, d}) == static_cast<double>(d));
            }
        }
    }
}

TEST_CASE("zero-offset snake conv degenerates to the straight clamped 1D conv") {
    for (auto axis : {SnakeAxis::X, SnakeAxis::Y, SnakeAxis::Z}) {
        for (int seed = 0; seed < 5; ++seed) {
            Rng rng(3000 + seed);
            SnakeBranch br = make_branch(axis, 4, 2, 3, rng, /*zero_pred=*/true);
            Tensor x = random_tensor({1, 2, 5, 6, 7}, rng, -2.0, 2.0, false);
            Tensor got = snake_conv_axis(x, br);
            Tensor want = straight_axis_conv_ref(x, br.w, br.b, axis, 4);
            CHECK(max_abs_diff(got, want) < 1e-10);
        }
    }
}

TEST_CASE("uniform off-axis drift cancels on a linear ramp") {
    // value = w coordinate; axis X taps drift in w by 0.5 per step; with
    // uniform weights the symmetric displacements average out at interior
    // voxels.
    const std::int64_t H = 6, W = 8, D = 4;
    const int c_max = 2, T = 5;
    std::vector<double> xv(H * W * D);
    std::int64_t i = 0;
    for (std::int64_t h = 0; h < H; ++h) {
        for (std::int64_t w = 0; w < W; ++w) {
            for (std::int64_t d = 0; d < D; ++d, ++i) xv[i] = static_cast<double>(w);
        }
    }
    Tensor x = Tensor::from_data({1, 1, H, W, D}, xv);
    SnakeKernelSpec spec;
    spec.axis = SnakeAxis::X;
    spec.half_length = c_max;
    Tensor raw = Tensor::zeros({1, 2 * T, H, W, D});
    {
        auto v = raw.mutable_values();
        const std::int64_t sp = H * W * D;
        for (int t = 0; t < T; ++t) {
            for (std::int64_t p = 0; p < sp; ++p) v[(2 * t) * sp + p] = 0.5;  // dy channel
        }
    }
    Tensor coords = cumulate_offsets(raw, spec);
    Tensor w = Tensor::full({1, 1, T}, 1.0 / T);
    Tensor b = Tensor::zeros({1});
    Tensor y = snake_conv_apply(x, coords, w, b);
    for (std::int64_t h = 0; h < H; ++h) {
        for (std::int64_t ww = 1; ww < W - 1; ++ww) {
            for (std::int64_t d = 0; d < D; ++d) {
                CHECK(y.at({0, 0, h, ww, d}) == doctest::Approx(static_cast<double>(ww)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("snake conv gradients through offsets vs finite differences") {
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(3100 + seed);
        SnakeBranch br = make_branch(SnakeAxis::X, 2, 1, 2, rng, false);
        Tensor x = random_tensor({1, 1, 4, 4, 4}, rng, -1.0, 1.0);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                SnakeBranch local = br;
                local.pred_w = in[1];
                local.pred_b = in[2];
                local.w = in[3];
                local.b = in[4];
                return weighted_sum(snake_conv_axis(in[0], local), 31);
            },
            {x, br.pred_w, br.pred_b, br.w, br.b}, 1e-4, 40, 500 + seed);
        CHECK_MESSAGE(rep.within(1e-4), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

namespace {

MdsConvBlock make_block(int cin, int cout, Rng& rng, bool zero_snake_weights) {
    MdsConvBlock blk;
    blk.in_channels = cin;
    blk.out_channels = cout;
    blk.gn_groups = std::min(8, cout);
    blk.std_w = random_tensor({cout, cin, 3, 3, 3}, rng, -0.4, 0.4);
    blk.std_b = random_tensor({cout}, rng, -0.2, 0.2);
    for (auto* br : {&blk.branch_x, &blk.branch_y, &blk.branch_z}) {
        const SnakeAxis axis = br == &blk.branch_x   ? SnakeAxis::X
                               : br == &blk.branch_y ? SnakeAxis::Y
                                                     : SnakeAxis::Z;
        *br = make_branch(axis, 4, cin, cout, rng, false);
        if (zero_snake_weights) {
            br->w = Tensor::zeros({cout, cin, 9}, true);
            br->b = Tensor::zeros({cout}, true);
        }
    }
    blk.fuse_w = random_tensor({cout, 4 * cout, 1, 1, 1}, rng, -0.3, 0.3);
    blk.fuse_b = random_tensor({cout}, rng, -0.2, 0.2);
    blk.gn_gain = random_tensor({cout}, rng, 0.5, 1.5);
    blk.gn_bias = random_tensor({cout}, rng, -0.2, 0.2);
    return blk;
}

}  // namespace

TEST_CASE("mdsconv zero input with zero biases stays zero") {
    Rng rng(26);
    MdsConvBlock blk = make_block(2, 4, rng, false);
    blk.std_b = Tensor::zeros({4}, true);
    blk.fuse_b = Tensor::zeros({4}, true);
    blk.gn_bias = Tensor::zeros({4}, true);
    for (auto* br : {&blk.branch_x, &blk.branch_y, &blk.branch_z}) br->b = Tensor::zeros({4}, true);
    Tensor x = Tensor::zeros({1, 2, 4, 4, 4});
    Tensor y = mdsconv_forward(x, blk);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("mdsconv with fusion selecting the standard branch equals conv+GN+ReLU") {
    Rng rng(27);
    const int cout = 4;
    MdsConvBlock blk = make_block(2, cout, rng, /*zero_snake_weights=*/true);
    // fusion = identity on the first Cout channels of the concatenation
    std::vector<double> fw(static_cast<std::size_t>(cout * 4 * cout), 0.0);
    for (int c = 0; c < cout; ++c) fw[static_cast<std::size_t>(c * 4 * cout + c)] = 1.0;
    blk.fuse_w = Tensor::from_data({cout, 4 * cout, 1, 1, 1}, fw);
    blk.fuse_b = Tensor::zeros({cout}, true);
    // snake branches contribute only their (zeroed) biases
    Tensor x = random_tensor({1, 2, 5, 5, 5}, rng, -1.0, 1.0, false);
    Tensor got = mdsconv_forward(x, blk);

    Conv3dOpts pad1;
    pad1.padding = 1;
    Tensor want = relu(group_norm(conv3d(x, blk.std_w, blk.std_b, pad1), blk.gn_groups, blk.gn_gain,
                                  blk.gn_bias));
    CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("mdsconv shape contract 16 -> 32") {
    Rng rng(28);
    MdsConvBlock blk = make_block(16, 32, rng, false);
    Tensor x = random_tensor({1, 16, 4, 4, 4}, rng, -0.5, 0.5, false);
    Tensor y = mdsconv_forward(x, blk);
    CHECK(y.shape() == Shape{1, 32, 4, 4, 4});
}

TEST_CASE("full mdsconv block gradient vs finite differences") {
    Rng rng(29);
    MdsConvBlock blk = make_block(2, 2, rng, false);
    Tensor x = random_tensor({1, 2, 6, 6, 6}, rng, -1.0, 1.0);
    std::vector<Tensor> leaves = {x,
                                  blk.std_w,
                                  blk.std_b,
                                  blk.branch_x.pred_w,
                                  blk.branch_x.w,
                                  blk.branch_y.pred_b,
                                  blk.branch_z.w,
                                  blk.fuse_w,
                                  blk.gn_gain,
                                  blk.gn_bias};
    auto rep = gradcheck(
        [&](const std::vector<Tensor>& in) {
            MdsConvBlock local = blk;
            local.std_w = in[1];
            local.std_b = in[2];
            local.branch_x.pred_w = in[3];
            local.branch_x.w = in[4];
            local.branch_y.pred_b = in[5];
            local.branch_z.w = in[6];
            local.fuse_w = in[7];
            local.gn_gain = in[8];
            local.gn_bias = in[9];
            return weighted_sum(mdsconv_forward(in[0], local), 33);
        },
        leaves, 1e-4, 12, 4242);
    CHECK_MESSAGE(rep.within(1e-4), "err ", rep.max_rel_err, " at ", rep.worst);
}
