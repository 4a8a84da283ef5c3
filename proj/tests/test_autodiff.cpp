#include "doctest.h"
#include "mdsvm/gradcheck.hpp"
#include "mdsvm/ops.hpp"
#include "test_helpers.hpp"

using namespace mdsvm;
using namespace mdsvm::testutil;

namespace {

// Reduce a tensor to a scalar through a fixed random weighting so every output
// coordinate influences the loss.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(static_cast<std::size_t>(t.numel()));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    Tensor weights = Tensor::from_data(t.shape(), std::move(w));
    return sum(hadamard(t, weights));
}

constexpr double kTol = 1e-4;
constexpr int kSeeds = 10;

}  // namespace

TEST_CASE("d(sum(x))/dx is ones") {
    Rng rng(1);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor loss = sum(x);
    backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("d(x*x)/dx is 2x") {
    Rng rng(2);
    Tensor x = random_tensor({5}, rng);
    backward(sum(hadamard(x, x)));
    for (std::int64_t i = 0; i < 5; ++i) {
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("fan-out accumulates additively") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    backward(sum(add(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(add(x, x)), ContractError);
}

TEST_CASE("elementwise and reduction gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(100 + seed);
        Tensor a = random_tensor_away_from_zero({2, 5}, rng);
        Tensor b = random_tensor_away_from_zero({2, 5}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                Tensor u = in[0];
                Tensor v = in[1];
                Tensor t = add(hadamard(u, v), sub(u, v));
                t = add(t, divide(u, v));
                t = add(t, relu(u));
                t = add(t, silu(v));
                t = add(t, tanh_op(u));
                t = add(t, sigmoid(v));
                t = add(t, softplus(u));
                return add(mean(t), weighted_sum(t, 9));
            },
            {a, b});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("exp/log/pow gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(200 + seed);
        Tensor a = random_tensor({6}, rng, 0.5, 2.0);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                Tensor t = add(exp_op(in[0]), log_op(in[0]));
                t = add(t, pow_scalar(in[0], 1.7));
                t = add(t, affine_scalar(in[0], -2.5, 0.75));
                return weighted_sum(t, 10);
            },
            {a});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("linear and scale_last gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(300 + seed);
        Tensor x = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({2, 4}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor s = random_tensor({4}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                Tensor t = linear(scale_last(in[0], in[3]), in[1], in[2]);
                return weighted_sum(t, 11);
            },
            {x, w, b, s});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("shape op gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(400 + seed);
        Tensor x = random_tensor({2, 3, 4}, rng);
        Tensor y = random_tensor({2, 2, 4}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                Tensor c = concat({in[0], in[1]}, 1);
                Tensor p = permute(c, {1, 0, 2});
                Tensor r = reshape(p, {5, 8});
                Tensor sl = slice(r, 0, 1, 3);
                return weighted_sum(sl, 12);
            },
            {x, y});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("conv3d gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(500 + seed);
        Tensor x = random_tensor({1, 2, 4, 4, 4}, rng);
        Tensor w = random_tensor({2, 2, 3, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        Conv3dOpts o;
        o.padding = 1;
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(conv3d(in[0], in[1], in[2], o), 13);
            },
            {x, w, b});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("conv3d strided, dilated, grouped gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(600 + seed);
        Tensor x = random_tensor({1, 4, 6, 6, 6}, rng);
        Tensor w = random_tensor({4, 2, 3, 3, 3}, rng);  // groups=2
        Conv3dOpts o;
        o.stride = 2;
        o.padding = 1;
        o.groups = 2;
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(conv3d(in[0], in[1], std::nullopt, o), 14);
            },
            {x, w}, 1e-4, 60, 77 + seed);
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("conv_transpose3d gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(700 + seed);
        Tensor x = random_tensor({1, 2, 3, 3, 3}, rng);
        Tensor w = random_tensor({2, 2, 2, 2, 2}, rng);
        Tensor b = random_tensor({2}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(conv_transpose3d(in[0], in[1], in[2], 2), 15);
            },
            {x, w, b});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("grid_sample_trilinear gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(800 + seed);
        Tensor x = random_tensor({1, 2, 4, 4, 4}, rng);
        Tensor c = random_coords(1, 6, 4, 4, 4, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(grid_sample_trilinear(in[0], in[1]), 16);
            },
            {x, c});
        CHECK_MESSAGE(rep.within(kTol), "seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);
    }
}

TEST_CASE("grid_sample gradient through clamped coordinates is zero") {
    Tensor x = Tensor::from_data({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    Tensor c = Tensor::from_data({1, 1, 3}, {-5.0, 0.5, 0.5}, true);
    backward(sum(grid_sample_trilinear(x, c)));
    CHECK(c.grad()[0] == 0.0);       // clamped axis: flat
    CHECK(c.grad()[1] != 0.0);
}

TEST_CASE("normalization gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(900 + seed);
        Tensor x = random_tensor({2, 4, 2, 2, 2}, rng);
        Tensor g = random_tensor({4}, rng, 0.5, 1.5);
        Tensor b = random_tensor({4}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(group_norm(in[0], 2, in[1], in[2]), 17);
            },
            {x, g, b});
        CHECK_MESSAGE(rep.within(kTol), "gn seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);

        Tensor xs = random_tensor({6, 5}, rng);
        Tensor gl = random_tensor({5}, rng, 0.5, 1.5);
        Tensor bl = random_tensor({5}, rng);
        auto rep2 = gradcheck(
            [&](const std::vector<Tensor>& in) {
                return weighted_sum(layer_norm(in[0], in[1], in[2]), 18);
            },
            {xs, gl, bl});
        CHECK_MESSAGE(rep2.within(kTol), "ln seed ", seed, " err ", rep2.max_rel_err, " at ", rep2.worst);
    }
}

TEST_CASE("upsample and pooling gradients vs finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(1000 + seed);
        Tensor x = random_tensor({1, 2, 2, 2, 2}, rng);
        auto rep = gradcheck(
            [&](const std::vector<Tensor>& in) { return weighted_sum(upsample_trilinear(in[0]), 19); },
            {x});
        CHECK_MESSAGE(rep.within(kTol), "up seed ", seed, " err ", rep.max_rel_err, " at ", rep.worst);

        // Max pooling: keep entries well separated so the argmax is stable
        // under the probe step.
        std::vector<double> vals(32);
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(i) * 0.01;
        for (std::size_t i = vals.size() - 1; i > 0; --i) std::swap(vals[i], vals[rng.index(i + 1)]);
        Tensor px = Tensor::from_data({1, 1, 4, 4, 2}, std::vector<double>(vals), true);
        auto rep2 = gradcheck(
            [&](const std::vector<Tensor>& in) { return weighted_sum(pool_max3d(in[0]), 20); },
            {px});
        CHECK_MESSAGE(rep2.within(kTol), "pool seed ", seed, " err ", rep2.max_rel_err);
    }
}

TEST_CASE("pool_max3d routes gradient only to the argmax") {
    std::vector<double> v(8, 0.0);
    v[5] = 3.0;
    Tensor x = Tensor::from_data({1, 1, 2, 2, 2}, v, true);
    backward(sum(pool_max3d(x)));
    for (std::int64_t i = 0; i < 8; ++i) {
        CHECK(x.grad()[i] == (i == 5 ? 1.0 : 0.0));
    }
}
