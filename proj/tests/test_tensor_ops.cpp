#include <numeric>

#include "doctest.h"
#include "mdsvm/ops.hpp"
#include "test_helpers.hpp"

using namespace mdsvm;
using namespace mdsvm::testutil;

TEST_CASE("conv3d zero input gives zero output") {
    Rng rng(7);
    Tensor x = Tensor::zeros({1, 1, 3, 3, 3});
    Tensor w = random_tensor({2, 1, 3, 3, 3}, rng);
    Tensor b = Tensor::zeros({2});
    Conv3dOpts o;
    o.padding = 1;
    Tensor y = conv3d(x, w, b, o);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("conv3d identity kernel is the identity map exactly") {
    Rng rng(8);
    Tensor x = random_tensor({1, 1, 4, 5, 6}, rng, -3.0, 3.0, false);
    std::vector<double> wv(27, 0.0);
    wv[13] = 1.0;  // center of the 3x3x3 stencil
    Tensor w = Tensor::from_data({1, 1, 3, 3, 3}, wv);
    Conv3dOpts o;
    o.padding = 1;
    Tensor y = conv3d(x, w, std::nullopt, o);
    CHECK(bit_equal(x, y));
}

TEST_CASE("conv3d all-ones 2x2x2 kernel sums the eight voxels") {
    std::vector<double> xv(8);
    std::iota(xv.begin(), xv.end(), 0.0);
    Tensor x = Tensor::from_data({1, 1, 2, 2, 2}, xv);
    Tensor w = Tensor::full({1, 1, 2, 2, 2}, 1.0);
    Tensor y = conv3d(x, w, std::nullopt, {});
    CHECK(y.numel() == 1);
    CHECK(y.item() == doctest::Approx(28.0));  // 0+1+...+7
}

TEST_CASE("conv3d stride and dilation output extents") {
    Rng rng(9);
    Tensor x = random_tensor({1, 1, 8, 8, 8}, rng);
    Tensor w = random_tensor({1, 1, 3, 3, 3}, rng);
    Conv3dOpts o;
    o.stride = 2;
    o.padding = 1;
    Tensor y = conv3d(x, w, std::nullopt, o);
    CHECK(y.shape() == Shape{1, 1, 4, 4, 4});
    Conv3dOpts o2;
    o2.dilation = 2;
    Tensor y2 = conv3d(x, w, std::nullopt, o2);
    CHECK(y2.shape() == Shape{1, 1, 4, 4, 4});
}

TEST_CASE("conv3d shape errors name the offending axis") {
    Tensor x = Tensor::zeros({1, 3, 4, 4, 4});
    Tensor w = Tensor::zeros({2, 4, 3, 3, 3});
    CHECK_THROWS_WITH_AS(conv3d(x, w, std::nullopt, {}), doctest::Contains("axis 1"), ShapeError);
    Tensor w2 = Tensor::zeros({2, 3, 3, 3, 3});
    Tensor bad_bias = Tensor::zeros({3});
    CHECK_THROWS_AS(conv3d(x, w2, bad_bias, {}), ShapeError);
}

TEST_CASE("grid_sample_trilinear reproduces stored values at integer coordinates") {
    Rng rng(10);
    Tensor x = random_tensor({1, 2, 3, 3, 3}, rng, -2.0, 2.0, false);
    Tensor c = Tensor::from_data({1, 1, 3}, {1.0, 1.0, 1.0});
    Tensor y = grid_sample_trilinear(x, c);
    CHECK(y.at({0, 0, 0}) == x.at({0, 0, 1, 1, 1}));
    CHECK(y.at({0, 1, 0}) == x.at({0, 1, 1, 1, 1}));
}

TEST_CASE("grid_sample_trilinear midpoint interpolates linearly") {
    Tensor x = Tensor::from_data({1, 1, 2, 1, 1}, {0.0, 2.0});
    Tensor c = Tensor::from_data({1, 1, 3}, {0.5, 0.0, 0.0});
    CHECK(grid_sample_trilinear(x, c).item() == doctest::Approx(1.0));
}

TEST_CASE("grid_sample_trilinear clamps out-of-range coordinates to the border") {
    Rng rng(11);
    Tensor x = random_tensor({1, 1, 4, 4, 4}, rng, -2.0, 2.0, false);
    // Oracle: clamp every component into [0, extent-1], then interpolate; for
    // integer clamped coordinates that is just the stored voxel.
    Tensor c = Tensor::from_data({1, 4, 3}, {-3.0, 0.0, 0.0,     //
                                             9.0, 1.0, 2.0,      //
                                             -1.5, -2.0, 100.0,  //
                                             2.0, 3.5, 1.0});
    Tensor y = grid_sample_trilinear(x, c);
    CHECK(y.at({0, 0, 0}) == x.at({0, 0, 0, 0, 0}));
    CHECK(y.at({0, 0, 1}) == x.at({0, 0, 3, 1, 2}));
    CHECK(y.at({0, 0, 2}) == x.at({0, 0, 0, 0, 3}));
    CHECK(y.at({0, 0, 3}) == x.at({0, 0, 2, 3, 1}));  // w clamps 3.5 -> 3
}

TEST_CASE("activations") {
    Tensor x = Tensor::from_data({3}, {-1.0, 2.0, 0.0});
    Tensor r = relu(x);
    CHECK(r.at({0}) == 0.0);
    CHECK(r.at({1}) == 2.0);
    Tensor s = silu(x);
    CHECK(s.at({2}) == 0.0);
    // x * sigmoid(x) at 1 with an independent sigmoid evaluation
    Tensor one = Tensor::from_data({1}, {1.0});
    const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(silu(one).item() == doctest::Approx(1.0 * sig1).epsilon(1e-12));
    CHECK(silu(one).item() == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("group_norm constant input maps to zero before affine") {
    Tensor x = Tensor::full({1, 4, 2, 2, 2}, 3.7);
    Tensor g = Tensor::full({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    Tensor y = group_norm(x, 2, g, b);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.0));
    CHECK(y.shape() == x.shape());
}

TEST_CASE("group_norm two-value group closed form") {
    Tensor x = Tensor::from_data({1, 2, 1, 1, 1}, {-1.0, 1.0});
    Tensor g = Tensor::full({2}, 1.0);
    Tensor b = Tensor::zeros({2});
    Tensor y = group_norm(x, 1, g, b);
    const double c = 1.0 / std::sqrt(1.0 + 1e-5);  // mean 0, biased var 1
    CHECK(y.at({0, 0, 0, 0, 0}) == doctest::Approx(-c).epsilon(1e-14));
    CHECK(y.at({0, 1, 0, 0, 0}) == doctest::Approx(c).epsilon(1e-14));
}

TEST_CASE("group_norm indivisible group count is a configuration error") {
    Tensor x = Tensor::zeros({1, 6, 1, 1, 1});
    Tensor g = Tensor::full({6}, 1.0);
    Tensor b = Tensor::zeros({6});
    CHECK_THROWS_AS(group_norm(x, 4, g, b), ConfigError);
}

TEST_CASE("normalization statistics match the epsilon formula") {
    Rng rng(12);
    Tensor x = random_tensor({2, 4, 3, 3, 3}, rng, -2.0, 5.0, false);
    Tensor g = Tensor::full({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    const int groups = 2;
    Tensor y = group_norm(x, groups, g, b);
    // per (sample, group): |mean| < 1e-10 and variance = var/(var+eps)
    const std::int64_t glen = (4 / groups) * 27;
    auto xv = x.values();
    auto yv = y.values();
    for (std::int64_t grp = 0; grp < 2 * groups; ++grp) {
        double m = 0.0, vy = 0.0, mx = 0.0, vx = 0.0;
        for (std::int64_t i = grp * glen; i < (grp + 1) * glen; ++i) {
            m += yv[i];
            mx += xv[i];
        }
        m /= glen;
        mx /= glen;
        for (std::int64_t i = grp * glen; i < (grp + 1) * glen; ++i) {
            vy += (yv[i] - m) * (yv[i] - m);
            vx += (xv[i] - mx) * (xv[i] - mx);
        }
        vy /= glen;
        vx /= glen;
        CHECK(std::abs(m) < 1e-10);
        CHECK(vy == doctest::Approx(vx / (vx + 1e-5)).epsilon(1e-10));
    }
}

TEST_CASE("linear") {
    Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
    Tensor id = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor zb = Tensor::zeros({2});
    CHECK(bit_equal(linear(x, id, zb), x));

    Tensor zw = Tensor::zeros({2, 2});
    Tensor bias = Tensor::from_data({2}, {5.0, -4.0});
    Tensor y = linear(x, zw, bias);
    CHECK(y.at({0, 0}) == 5.0);
    CHECK(y.at({0, 1}) == -4.0);

    Tensor w = Tensor::from_data({2, 2}, {1.0, 1.0, 0.0, 1.0});
    Tensor z = linear(x, w, std::nullopt);
    CHECK(z.at({0, 0}) == doctest::Approx(3.0));
    CHECK(z.at({0, 1}) == doctest::Approx(2.0));
}

TEST_CASE("dwconv3d center-one kernels are the identity") {
    Rng rng(13);
    Tensor x = random_tensor({1, 3, 4, 4, 4}, rng, -2.0, 2.0, false);
    std::vector<double> wv(3 * 27, 0.0);
    for (int c = 0; c < 3; ++c) wv[c * 27 + 13] = 1.0;
    Tensor w = Tensor::from_data({3, 1, 3, 3, 3}, wv);
    CHECK(bit_equal(dwconv3d(x, w, std::nullopt, 1), x));
}

TEST_CASE("dwconv3d all-ones kernel on a constant channel counts 27 neighbors") {
    Tensor x = Tensor::full({1, 1, 5, 5, 5}, 1.5);
    Tensor w = Tensor::full({1, 1, 3, 3, 3}, 1.0);
    Tensor y = dwconv3d(x, w, std::nullopt, 1);
    CHECK(y.at({0, 0, 2, 2, 2}) == doctest::Approx(27 * 1.5));
}

TEST_CASE("dwconv3d channels are independent") {
    Rng rng(14);
    Tensor x0 = random_tensor({1, 2, 3, 3, 3}, rng, -1.0, 1.0, false);
    Tensor w = random_tensor({2, 1, 3, 3, 3}, rng, -1.0, 1.0, false);
    Tensor y0 = dwconv3d(x0, w, std::nullopt, 1);
    // perturb channel 0 only
    std::vector<double> xv(x0.values().begin(), x0.values().end());
    for (int i = 0; i < 27; ++i) xv[i] += 0.5;
    Tensor x1 = Tensor::from_data({1, 2, 3, 3, 3}, xv);
    Tensor y1 = dwconv3d(x1, w, std::nullopt, 1);
    for (std::int64_t i = 0; i < 27; ++i) {
        CHECK(y0.values()[27 + i] == y1.values()[27 + i]);  // channel 1 untouched
    }
}

TEST_CASE("upsample_trilinear doubles extents and preserves constants") {
    Tensor x = Tensor::full({1, 2, 2, 3, 2}, 4.25);
    Tensor y = upsample_trilinear(x);
    CHECK(y.shape() == Shape{1, 2, 4, 6, 4});
    for (double v : y.values()) CHECK(v == doctest::Approx(4.25));
}

TEST_CASE("upsample_trilinear linear ramp matches the half-pixel formula") {
    const std::int64_t H = 4;
    std::vector<double> xv(H);
    std::iota(xv.begin(), xv.end(), 0.0);
    Tensor x = Tensor::from_data({1, 1, H, 1, 1}, xv);
    Tensor y = upsample_trilinear(x);
    for (std::int64_t o = 0; o < 2 * H; ++o) {
        double src = 0.5 * o - 0.25;  // half-pixel centers
        src = std::min(std::max(src, 0.0), static_cast<double>(H - 1));
        CHECK(y.at({0, 0, o, 0, 0}) == doctest::Approx(src).epsilon(1e-12));
    }
}

TEST_CASE("pool_max3d") {
    Tensor c = Tensor::full({1, 1, 2, 2, 2}, 3.0);
    CHECK(pool_max3d(c).item() == 3.0);

    std::vector<double> xv(8);
    std::iota(xv.begin(), xv.end(), 0.0);
    Tensor x = Tensor::from_data({1, 1, 2, 2, 2}, xv);
    CHECK(pool_max3d(x).item() == 7.0);

    Tensor odd = Tensor::zeros({1, 1, 3, 2, 2});
    CHECK_THROWS_AS(pool_max3d(odd), ShapeError);
}

TEST_CASE("combine ops") {
    Rng rng(15);
    Tensor x = random_tensor({2, 3}, rng, -1.0, 1.0, false);
    Tensor zero = Tensor::zeros({2, 3});
    CHECK(bit_equal(add(x, zero), x));
    Tensor one = Tensor::full({2, 3}, 1.0);
    CHECK(bit_equal(hadamard(x, one), x));

    std::vector<Tensor> parts;
    for (int i = 0; i < 4; ++i) parts.push_back(random_tensor({1, 16, 2, 2, 2}, rng, -1.0, 1.0, false));
    Tensor cat = concat(parts, 1);
    CHECK(cat.extent(1) == 64);
    CHECK(cat.at({0, 17, 0, 0, 1}) == parts[1].at({0, 1, 0, 0, 1}));

    Tensor y = random_tensor({2, 4}, rng, -1.0, 1.0, false);
    CHECK_THROWS_AS(add(x, y), ShapeError);
}

TEST_CASE("ops are pure: identical inputs give bit-identical outputs") {
    Rng rng(16);
    Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, -1.0, 1.0, false);
    Tensor w = random_tensor({3, 2, 3, 3, 3}, rng, -1.0, 1.0, false);
    Conv3dOpts o;
    o.padding = 1;
    CHECK(bit_equal(conv3d(x, w, std::nullopt, o), conv3d(x, w, std::nullopt, o)));
    Tensor g = Tensor::full({2}, 1.3);
    Tensor b = Tensor::full({2}, -0.2);
    CHECK(bit_equal(group_norm(x, 2, g, b), group_norm(x, 2, g, b)));
}

TEST_CASE("reshape, permute, slice round trips") {
    Rng rng(17);
    Tensor x = random_tensor({2, 3, 4}, rng, -1.0, 1.0, false);
    Tensor r = reshape(x, {4, 6});
    CHECK(r.numel() == x.numel());
    Tensor p = permute(x, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    CHECK(p.at({1, 0, 2}) == x.at({0, 2, 1}));
    Tensor back = permute(p, {1, 2, 0});
    CHECK(bit_equal(back, x));
    Tensor s = slice(x, 1, 1, 2);
    CHECK(s.shape() == Shape{2, 2, 4});
    CHECK(s.at({1, 0, 3}) == x.at({1, 1, 3}));
}
