#include <cmath>

#include "mdsvm/ops.hpp"
#include "mdsvm/threadpool.hpp"
#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

namespace {

constexpr double kNormEps = 1e-5;

// Shared normalization core over contiguous groups. x is viewed as
// [n_groups, group_len] where group g covers channels [c0(g), c0(g)+cpg) and
// each channel spans `inner` contiguous elements.
struct NormDims {
    std::int64_t n_groups;   // B * G
    std::int64_t cpg;        // channels per group
    std::int64_t inner;      // spatial elements per channel (1 for layer norm rows)
    std::int64_t channels;   // affine parameter count
};

}  // namespace

static Tensor norm_impl(const char* name, const Tensor& x, const NormDims& nd, const Tensor& gain,
                        const Tensor& bias) {
    if (gain.dim() != 1 || gain.extent(0) != nd.channels || bias.dim() != 1 ||
        bias.extent(0) != nd.channels) {
        throw ShapeError(std::string(name) + ": gain/bias must be [" + std::to_string(nd.channels) + "]");
    }
    auto out = result_node(x.shape(), {x.node(), gain.node(), bias.node()});
    const std::int64_t glen = nd.cpg * nd.inner;
    const double* px = x.values().data();
    const double* pg = gain.values().data();
    const double* pb = bias.values().data();
    double* po = out->value.data();
    // stash: per group (mean, rstd)
    out->stash.assign(static_cast<std::size_t>(2 * nd.n_groups), 0.0);
    double* st = out->stash.data();
    const std::int64_t groups_per_sample = nd.channels / nd.cpg;
    parallel_for(nd.n_groups, [&](std::int64_t g0, std::int64_t g1) {
        for (std::int64_t g = g0; g < g1; ++g) {
            const double* xg = px + g * glen;
            double* og = po + g * glen;
            double m = 0.0;
            for (std::int64_t i = 0; i < glen; ++i) m += xg[i];
            m /= static_cast<double>(glen);
            double var = 0.0;
            for (std::int64_t i = 0; i < glen; ++i) {
                const double d = xg[i] - m;
                var += d * d;
            }
            var /= static_cast<double>(glen);
            const double r = 1.0 / std::sqrt(var + kNormEps);
            st[2 * g] = m;
            st[2 * g + 1] = r;
            const std::int64_t c_base = (g % groups_per_sample) * nd.cpg;
            for (std::int64_t c = 0; c < nd.cpg; ++c) {
                const double gn = pg[c_base + c];
                const double bn = pb[c_base + c];
                for (std::int64_t i = 0; i < nd.inner; ++i) {
                    const std::int64_t k = c * nd.inner + i;
                    og[k] = gn * (xg[k] - m) * r + bn;
                }
            }
        }
    });
    if (out->requires_grad) {
        auto nx = x.node();
        auto ng = gain.node();
        auto nb = bias.node();
        out->backward_fn = [nx, ng, nb, nd, glen, groups_per_sample](detail::Node& self) {
            const double* g = self.grad.data();
            const double* px = nx->value.data();
            const double* pgain = ng->value.data();
            const double* st = self.stash.data();
            if (wants_grad(nx)) {
                double* gx = grad_ptr(nx);
                parallel_for(nd.n_groups, [&](std::int64_t g0, std::int64_t g1) {
                    for (std::int64_t gr = g0; gr < g1; ++gr) {
                        const double m = st[2 * gr];
                        const double r = st[2 * gr + 1];
                        const double* xg = px + gr * glen;
                        const double* gg = g + gr * glen;
                        double* gxg = gx + gr * glen;
                        const std::int64_t c_base = (gr % groups_per_sample) * nd.cpg;
                        double sum1 = 0.0, sum2 = 0.0;
                        for (std::int64_t c = 0; c < nd.cpg; ++c) {
                            const double gn = pgain[c_base + c];
                            for (std::int64_t i = 0; i < nd.inner; ++i) {
                                const std::int64_t k = c * nd.inner + i;
                                const double dy = gg[k] * gn;
                                sum1 += dy;
                                sum2 += dy * (xg[k] - m) * r;
                            }
                        }
                        const double inv_n = 1.0 / static_cast<double>(glen);
                        for (std::int64_t c = 0; c < nd.cpg; ++c) {
                            const double gn = pgain[c_base + c];
                            for (std::int64_t i = 0; i < nd.inner; ++i) {
                                const std::int64_t k = c * nd.inner + i;
                                const double dy = gg[k] * gn;
                                const double xhat = (xg[k] - m) * r;
                                gxg[k] += r * (dy - (sum1 + xhat * sum2) * inv_n);
                            }
                        }
                    }
                });
            }
            const bool want_g = wants_grad(ng);
            const bool want_b = wants_grad(nb);
            if (want_g || want_b) {
                double* ggain = want_g ? grad_ptr(ng) : nullptr;
                double* gbias = want_b ? grad_ptr(nb) : nullptr;
                for (std::int64_t gr = 0; gr < nd.n_groups; ++gr) {
                    const double m = st[2 * gr];
                    const double r = st[2 * gr + 1];
                    const double* xg = px + gr * glen;
                    const double* gg = g + gr * glen;
                    const std::int64_t c_base = (gr % groups_per_sample) * nd.cpg;
                    for (std::int64_t c = 0; c < nd.cpg; ++c) {
                        double acc_g = 0.0, acc_b = 0.0;
                        for (std::int64_t i = 0; i < nd.inner; ++i) {
                            const std::int64_t k = c * nd.inner + i;
                            acc_g += gg[k] * (xg[k] - m) * r;
                            acc_b += gg[k];
                        }
                        if (ggain) ggain[c_base + c] += acc_g;
                        if (gbias) gbias[c_base + c] += acc_b;
                    }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& bias) {
    if (x.dim() < 2) throw ShapeError("group_norm: input must have batch and channel axes");
    const std::int64_t C = x.extent(1);
    if (groups < 1 || C % groups != 0) {
        throw ConfigError("group_norm: channel count " + std::to_string(C) + " not divisible by " +
                          std::to_string(groups) + " groups");
    }
    NormDims nd;
    nd.cpg = C / groups;
    nd.inner = x.numel() / (x.extent(0) * C);
    nd.n_groups = x.extent(0) * groups;
    nd.channels = C;
    return norm_impl("group_norm", x, nd, gain, bias);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const std::int64_t C = x.shape().back();
    NormDims nd;
    nd.cpg = C;
    nd.inner = 1;
    nd.n_groups = x.numel() / C;
    nd.channels = C;
    return norm_impl("layer_norm", x, nd, gain, bias);
}

}  // namespace mdsvm
