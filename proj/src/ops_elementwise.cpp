#include <cmath>

#include "mdsvm/ops.hpp"
#include "mdsvm/threadpool.hpp"
#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        const auto& sa = a.shape();
        const auto& sb = b.shape();
        std::size_t ax = 0;
        while (ax < sa.size() && ax < sb.size() && sa[ax] == sb[ax]) ++ax;
        throw ShapeError(std::string(op) + ": operand shapes " + shape_str(sa) + " and " + shape_str(sb) +
                         " differ at axis " + std::to_string(ax));
    }
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    check_same_shape(name, a, b);
    auto out = result_node(a.shape(), {a.node(), b.node()});
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) out->value[i] = fwd(pa[i], pb[i]);
    if (out->requires_grad) {
        auto na = a.node();
        auto nb = b.node();
        out->backward_fn = [na, nb, bwd](detail::Node& self) {
            const std::int64_t m = self.numel();
            double* ga = wants_grad(na) ? grad_ptr(na) : nullptr;
            double* gb = wants_grad(nb) ? grad_ptr(nb) : nullptr;
            const double* va = na->value.data();
            const double* vb = nb->value.data();
            for (std::int64_t i = 0; i < m; ++i) {
                const double g = self.grad[i];
                auto [da, db] = bwd(va[i], vb[i], g);
                if (ga) ga[i] += da;
                if (gb) gb[i] += db;
            }
        };
    }
    return Tensor(out);
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
    auto out = result_node(x.shape(), {x.node()});
    const double* px = x.values().data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) out->value[i] = fwd(px[i]);
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx, bwd](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double* vx = nx->value.data();
            const double* vy = self.value.data();
            for (std::int64_t i = 0; i < self.numel(); ++i) {
                gx[i] += self.grad[i] * bwd(vx[i], vy[i]);
            }
        };
    }
    return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g) { return std::pair{g, -g}; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    return binary_op(
        "hadamard", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
    return binary_op(
        "divide", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g) { return std::pair{g / y, -g * x / (y * y)}; });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor tanh_op(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_op(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
    // log(1 + e^x) in its overflow-safe form.
    return unary_op(
        x,
        [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor pow_scalar(const Tensor& x, double p) {
    return unary_op(
        x, [p](double v) { return std::pow(v, p); },
        [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor affine_scalar(const Tensor& x, double a, double b) {
    return unary_op(
        x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

Tensor sum(const Tensor& x) {
    auto out = result_node({1}, {x.node()});
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out->value[0] = acc;
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double g = self.grad[0];
            for (std::int64_t i = 0; i < nx->numel(); ++i) gx[i] += g;
        };
    }
    return Tensor(out);
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    return affine_scalar(sum(x), inv, 0.0);
}

Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
    if (w.dim() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(w.shape()));
    const std::int64_t cin = x.shape().back();
    const std::int64_t cout = w.extent(0);
    if (w.extent(1) != cin) {
        throw ShapeError("linear: trailing axis of input has extent " + std::to_string(cin) +
                         " but weight expects " + std::to_string(w.extent(1)));
    }
    if (b && (b->dim() != 1 || b->extent(0) != cout)) {
        throw ShapeError("linear: bias must be [" + std::to_string(cout) + "]");
    }
    Shape out_shape = x.shape();
    out_shape.back() = cout;
    auto out = b ? result_node(out_shape, {x.node(), w.node(), b->node()})
                 : result_node(out_shape, {x.node(), w.node()});
    const std::int64_t rows = x.numel() / cin;
    const double* px = x.values().data();
    const double* pw = w.values().data();
    const double* pb = b ? b->values().data() : nullptr;
    double* po = out->value.data();
    parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const double* xr = px + r * cin;
            double* orow = po + r * cout;
            for (std::int64_t o = 0; o < cout; ++o) {
                const double* wr = pw + o * cin;
                double acc = pb ? pb[o] : 0.0;
                for (std::int64_t i = 0; i < cin; ++i) acc += xr[i] * wr[i];
                orow[o] = acc;
            }
        }
    });
    if (out->requires_grad) {
        auto nx = x.node();
        auto nw = w.node();
        auto nb = b ? b->node() : nullptr;
        out->backward_fn = [nx, nw, nb, rows, cin, cout](detail::Node& self) {
            const double* g = self.grad.data();
            const double* vx = nx->value.data();
            const double* vw = nw->value.data();
            if (wants_grad(nx)) {
                double* gx = grad_ptr(nx);
                parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
                    for (std::int64_t r = r0; r < r1; ++r) {
                        const double* gr = g + r * cout;
                        double* gxr = gx + r * cin;
                        for (std::int64_t o = 0; o < cout; ++o) {
                            const double go = gr[o];
                            const double* wr = vw + o * cin;
                            for (std::int64_t i = 0; i < cin; ++i) gxr[i] += go * wr[i];
                        }
                    }
                });
            }
            if (wants_grad(nw)) {
                double* gw = grad_ptr(nw);
                parallel_for(cout, [&](std::int64_t o0, std::int64_t o1) {
                    for (std::int64_t o = o0; o < o1; ++o) {
                        double* gwr = gw + o * cin;
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const double go = g[r * cout + o];
                            const double* xr = vx + r * cin;
                            for (std::int64_t i = 0; i < cin; ++i) gwr[i] += go * xr[i];
                        }
                    }
                });
            }
            if (nb && wants_grad(nb)) {
                double* gb = grad_ptr(nb);
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t o = 0; o < cout; ++o) gb[o] += g[r * cout + o];
                }
            }
        };
    }
    return Tensor(out);
}

Tensor scale_last(const Tensor& x, const Tensor& s) {
    const std::int64_t c = x.shape().back();
    if (s.dim() != 1 || s.extent(0) != c) {
        throw ShapeError("scale_last: scale must be [" + std::to_string(c) + "], got " +
                         shape_str(s.shape()));
    }
    auto out = result_node(x.shape(), {x.node(), s.node()});
    const std::int64_t rows = x.numel() / c;
    const double* px = x.values().data();
    const double* ps = s.values().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < c; ++i) out->value[r * c + i] = px[r * c + i] * ps[i];
    }
    if (out->requires_grad) {
        auto nx = x.node();
        auto ns = s.node();
        out->backward_fn = [nx, ns, rows, c](detail::Node& self) {
            const double* g = self.grad.data();
            const double* vx = nx->value.data();
            const double* vs = ns->value.data();
            if (wants_grad(nx)) {
                double* gx = grad_ptr(nx);
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t i = 0; i < c; ++i) gx[r * c + i] += g[r * c + i] * vs[i];
                }
            }
            if (wants_grad(ns)) {
                double* gs = grad_ptr(ns);
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t i = 0; i < c; ++i) gs[i] += g[r * c + i] * vx[r * c + i];
                }
            }
        };
    }
    return Tensor(out);
}

}  // namespace mdsvm
