#pragma once

#include <cmath>
#include <vector>

#include "mdsvm/rng.hpp"
#include "mdsvm/tensor.hpp"

namespace mdsvm::testutil {

// Random tensor with entries in [lo, hi).
inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Random tensor with |entry| in [0.1, hi): keeps finite-difference probes away
// from the kinks of relu-like functions at the origin.
inline Tensor random_tensor_away_from_zero(Shape shape, Rng& rng, double hi = 1.5,
                                           bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) {
        const double mag = rng.uniform(0.1, hi);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Fractional coordinates inside [0, extent-1] with fractional part in
// [0.1, 0.9], avoiding the interpolation kinks at integer positions.
inline Tensor random_coords(std::int64_t B, std::int64_t M, std::int64_t H, std::int64_t W,
                            std::int64_t D, Rng& rng, bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(B * M * 3));
    const std::int64_t ext[3] = {H, W, D};
    for (std::int64_t i = 0; i < B * M; ++i) {
        for (int k = 0; k < 3; ++k) {
            const std::int64_t cell = rng.index(std::max<std::int64_t>(1, ext[k] - 1));
            v[static_cast<std::size_t>(i * 3 + k)] = static_cast<double>(cell) + rng.uniform(0.1, 0.9);
        }
    }
    return Tensor::from_data({B, M, 3}, std::move(v), requires_grad);
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i] != vb[i]) return false;
    }
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) m = std::max(m, std::abs(va[i] - vb[i]));
    return m;
}

}  // namespace mdsvm::testutil
