#include <cmath>
#include <limits>

#include "mdsvm/ops.hpp"
#include "mdsvm/threadpool.hpp"
#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

namespace {

// One axis of border-clamped trilinear interpolation. in_grad is 1 while the
// unclamped coordinate stays inside [0, extent-1]; outside, the sample sits on
// the border voxel and the coordinate gradient vanishes.
struct AxisTap {
    std::int64_t i0, i1;
    double t;
    double in_grad;
};

inline AxisTap axis_tap(double coord, std::int64_t extent) {
    AxisTap a;
    a.in_grad = (coord >= 0.0 && coord <= static_cast<double>(extent - 1)) ? 1.0 : 0.0;
    double c = coord;
    if (c < 0.0) c = 0.0;
    const double hi = static_cast<double>(extent - 1);
    if (c > hi) c = hi;
    if (extent == 1) {
        a.i0 = a.i1 = 0;
        a.t = 0.0;
        a.in_grad = 0.0;
        return a;
    }
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(c));
    if (i0 > extent - 2) i0 = extent - 2;
    a.i0 = i0;
    a.i1 = i0 + 1;
    a.t = c - static_cast<double>(i0);
    return a;
}

inline double lerp3(const double* plane, std::int64_t W, std::int64_t D, const AxisTap& h,
                    const AxisTap& w, const AxisTap& d) {
    const double* r00 = plane + (h.i0 * W + w.i0) * D;
    const double* r01 = plane + (h.i0 * W + w.i1) * D;
    const double* r10 = plane + (h.i1 * W + w.i0) * D;
    const double* r11 = plane + (h.i1 * W + w.i1) * D;
    const double v000 = r00[d.i0], v001 = r00[d.i1];
    const double v010 = r01[d.i0], v011 = r01[d.i1];
    const double v100 = r10[d.i0], v101 = r10[d.i1];
    const double v110 = r11[d.i0], v111 = r11[d.i1];
    const double c00 = v000 + (v001 - v000) * d.t;
    const double c01 = v010 + (v011 - v010) * d.t;
    const double c10 = v100 + (v101 - v100) * d.t;
    const double c11 = v110 + (v111 - v110) * d.t;
    const double c0 = c00 + (c01 - c00) * w.t;
    const double c1 = c10 + (c11 - c10) * w.t;
    return c0 + (c1 - c0) * h.t;
}

// Partial derivatives of the interpolated value w.r.t. the three clamped
// coordinates, each already masked by the border-clamp gradient.
inline void lerp3_coord_grad(const double* plane, std::int64_t W, std::int64_t D, const AxisTap& h,
                             const AxisTap& w, const AxisTap& d, double* dh, double* dw, double* dd) {
    const double* r00 = plane + (h.i0 * W + w.i0) * D;
    const double* r01 = plane + (h.i0 * W + w.i1) * D;
    const double* r10 = plane + (h.i1 * W + w.i0) * D;
    const double* r11 = plane + (h.i1 * W + w.i1) * D;
    const double v000 = r00[d.i0], v001 = r00[d.i1];
    const double v010 = r01[d.i0], v011 = r01[d.i1];
    const double v100 = r10[d.i0], v101 = r10[d.i1];
    const double v110 = r11[d.i0], v111 = r11[d.i1];
    const double c00 = v000 + (v001 - v000) * d.t;
    const double c01 = v010 + (v011 - v010) * d.t;
    const double c10 = v100 + (v101 - v100) * d.t;
    const double c11 = v110 + (v111 - v110) * d.t;
    *dh = ((c10 + (c11 - c10) * w.t) - (c00 + (c01 - c00) * w.t)) * h.in_grad;
    *dw = ((c01 - c00) + ((c11 - c10) - (c01 - c00)) * h.t) * w.in_grad;
    const double d00 = v001 - v000, d01 = v011 - v010, d10 = v101 - v100, d11 = v111 - v110;
    const double e0 = d00 + (d01 - d00) * w.t;
    const double e1 = d10 + (d11 - d10) * w.t;
    *dd = (e0 + (e1 - e0) * h.t) * d.in_grad;
}

// Scatters g into the eight corners with trilinear weights.
inline void lerp3_scatter(double* plane, std::int64_t W, std::int64_t D, const AxisTap& h,
                          const AxisTap& w, const AxisTap& d, double g) {
    const double wh1 = h.t, wh0 = 1.0 - h.t;
    const double ww1 = w.t, ww0 = 1.0 - w.t;
    const double wd1 = d.t, wd0 = 1.0 - d.t;
    double* r00 = plane + (h.i0 * W + w.i0) * D;
    double* r01 = plane + (h.i0 * W + w.i1) * D;
    double* r10 = plane + (h.i1 * W + w.i0) * D;
    double* r11 = plane + (h.i1 * W + w.i1) * D;
    r00[d.i0] += g * wh0 * ww0 * wd0;
    r00[d.i1] += g * wh0 * ww0 * wd1;
    r01[d.i0] += g * wh0 * ww1 * wd0;
    r01[d.i1] += g * wh0 * ww1 * wd1;
    r10[d.i0] += g * wh1 * ww0 * wd0;
    r10[d.i1] += g * wh1 * ww0 * wd1;
    r11[d.i0] += g * wh1 * ww1 * wd0;
    r11[d.i1] += g * wh1 * ww1 * wd1;
}

}  // namespace

Tensor grid_sample_trilinear(const Tensor& input, const Tensor& coords) {
    if (input.dim() != 5) throw ShapeError("grid_sample_trilinear: input must be rank 5");
    if (coords.dim() != 3 || coords.extent(2) != 3) {
        throw ShapeError("grid_sample_trilinear: coords must be [B,M,3], got " + shape_str(coords.shape()));
    }
    if (coords.extent(0) != input.extent(0)) {
        throw ShapeError("grid_sample_trilinear: batch axis 0 mismatch");
    }
    if (!coords.all_finite()) throw ContractError("grid_sample_trilinear: coords must be finite");
    const std::int64_t B = input.extent(0), C = input.extent(1);
    const std::int64_t H = input.extent(2), W = input.extent(3), D = input.extent(4);
    const std::int64_t M = coords.extent(1);
    const std::int64_t sp = H * W * D;
    auto out = result_node({B, C, M}, {input.node(), coords.node()});
    const double* in = input.values().data();
    const double* cp = coords.values().data();
    double* op = out->value.data();
    parallel_for(B * M, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bm = i0; bm < i1; ++bm) {
            const std::int64_t b = bm / M;
            const std::int64_t m = bm % M;
            const double* c3 = cp + (b * M + m) * 3;
            const AxisTap th = axis_tap(c3[0], H), tw = axis_tap(c3[1], W), td = axis_tap(c3[2], D);
            for (std::int64_t c = 0; c < C; ++c) {
                op[(b * C + c) * M + m] = lerp3(in + (b * C + c) * sp, W, D, th, tw, td);
            }
        }
    });
    if (out->requires_grad) {
        auto nin = input.node();
        auto nc = coords.node();
        out->backward_fn = [nin, nc, B, C, H, W, D, M, sp](detail::Node& self) {
            const double* g = self.grad.data();
            const double* cp = nc->value.data();
            if (wants_grad(nin)) {
                double* gin = grad_ptr(nin);
                parallel_for(B * C, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t bc = i0; bc < i1; ++bc) {
                        const std::int64_t b = bc / C;
                        double* plane = gin + bc * sp;
                        for (std::int64_t m = 0; m < M; ++m) {
                            const double* c3 = cp + (b * M + m) * 3;
                            const AxisTap th = axis_tap(c3[0], H), tw = axis_tap(c3[1], W),
                                          td = axis_tap(c3[2], D);
                            lerp3_scatter(plane, W, D, th, tw, td, g[bc * M + m]);
                        }
                    }
                });
            }
            if (wants_grad(nc)) {
                double* gc = grad_ptr(nc);
                const double* in = nin->value.data();
                parallel_for(B * M, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t bm = i0; bm < i1; ++bm) {
                        const std::int64_t b = bm / M;
                        const std::int64_t m = bm % M;
                        const double* c3 = cp + bm * 3;
                        const AxisTap th = axis_tap(c3[0], H), tw = axis_tap(c3[1], W),
                                      td = axis_tap(c3[2], D);
                        double acc_h = 0.0, acc_w = 0.0, acc_d = 0.0;
                        for (std::int64_t c = 0; c < C; ++c) {
                            double dh, dw, dd;
                            lerp3_coord_grad(in + (b * C + c) * sp, W, D, th, tw, td, &dh, &dw, &dd);
                            const double go = g[(b * C + c) * M + m];
                            acc_h += go * dh;
                            acc_w += go * dw;
                            acc_d += go * dd;
                        }
                        gc[bm * 3 + 0] += acc_h;
                        gc[bm * 3 + 1] += acc_w;
                        gc[bm * 3 + 2] += acc_d;
                    }
                });
            }
        };
    }
    return Tensor(out);
}

Tensor upsample_trilinear(const Tensor& x) {
    if (x.dim() != 5) throw ShapeError("upsample_trilinear: input must be rank 5");
    const std::int64_t B = x.extent(0), C = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3), D = x.extent(4);
    const std::int64_t Ho = 2 * H, Wo = 2 * W, Do = 2 * D;
    auto out = result_node({B, C, Ho, Wo, Do}, {x.node()});

    // Half-pixel centers: src = (o + 0.5)/2 - 0.5, clamped to the border.
    auto make_taps = [](std::int64_t out_ext, std::int64_t in_ext) {
        std::vector<AxisTap> taps(out_ext);
        for (std::int64_t o = 0; o < out_ext; ++o) {
            taps[o] = axis_tap(0.5 * static_cast<double>(o) - 0.25, in_ext);
        }
        return taps;
    };
    const auto th = make_taps(Ho, H), tw = make_taps(Wo, W), td = make_taps(Do, D);
    const double* in = x.values().data();
    double* op = out->value.data();
    const std::int64_t sp_in = H * W * D;
    const std::int64_t sp_out = Ho * Wo * Do;
    parallel_for(B * C, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const double* plane = in + bc * sp_in;
            double* outp = op + bc * sp_out;
            std::int64_t oi = 0;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    for (std::int64_t od = 0; od < Do; ++od, ++oi) {
                        outp[oi] = lerp3(plane, W, D, th[oh], tw[ow], td[od]);
                    }
                }
            }
        }
    });
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx, B, C, H, W, D, Ho, Wo, Do, th, tw, td, sp_in, sp_out](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double* g = self.grad.data();
            parallel_for(B * C, [&](std::int64_t i0, std::int64_t i1) {
                for (std::int64_t bc = i0; bc < i1; ++bc) {
                    double* plane = gx + bc * sp_in;
                    const double* gp = g + bc * sp_out;
                    std::int64_t oi = 0;
                    for (std::int64_t oh = 0; oh < Ho; ++oh) {
                        for (std::int64_t ow = 0; ow < Wo; ++ow) {
                            for (std::int64_t od = 0; od < Do; ++od, ++oi) {
                                lerp3_scatter(plane, W, D, th[oh], tw[ow], td[od], gp[oi]);
                            }
                        }
                    }
                }
            });
        };
    }
    return Tensor(out);
}

Tensor pool_max3d(const Tensor& x) {
    if (x.dim() != 5) throw ShapeError("pool_max3d: input must be rank 5");
    const std::int64_t B = x.extent(0), C = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3), D = x.extent(4);
    for (int ax = 2; ax < 5; ++ax) {
        if (x.extent(ax) % 2) {
            throw ShapeError("pool_max3d: axis " + std::to_string(ax) + " extent " +
                             std::to_string(x.extent(ax)) + " is odd");
        }
    }
    const std::int64_t Ho = H / 2, Wo = W / 2, Do = D / 2;
    auto out = result_node({B, C, Ho, Wo, Do}, {x.node()});
    out->stash_i.assign(static_cast<std::size_t>(out->numel()), 0);
    const double* in = x.values().data();
    double* op = out->value.data();
    std::int64_t* am = out->stash_i.data();
    const std::int64_t sp_in = H * W * D;
    const std::int64_t sp_out = Ho * Wo * Do;
    parallel_for(B * C, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const double* plane = in + bc * sp_in;
            std::int64_t oi = bc * sp_out;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    for (std::int64_t od = 0; od < Do; ++od, ++oi) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::int64_t best_i = 0;
                        for (std::int64_t dh = 0; dh < 2; ++dh) {
                            for (std::int64_t dw = 0; dw < 2; ++dw) {
                                for (std::int64_t dd = 0; dd < 2; ++dd) {
                                    const std::int64_t ii =
                                        ((2 * oh + dh) * W + 2 * ow + dw) * D + 2 * od + dd;
                                    // strict > keeps the first index on ties
                                    if (plane[ii] > best) {
                                        best = plane[ii];
                                        best_i = ii;
                                    }
                                }
                            }
                        }
                        op[oi] = best;
                        am[oi] = best_i;
                    }
                }
            }
        }
    });
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx, B, C, sp_in, sp_out](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double* g = self.grad.data();
            const std::int64_t* am = self.stash_i.data();
            parallel_for(B * C, [&](std::int64_t i0, std::int64_t i1) {
                for (std::int64_t bc = i0; bc < i1; ++bc) {
                    double* plane = gx + bc * sp_in;
                    for (std::int64_t oi = bc * sp_out; oi < (bc + 1) * sp_out; ++oi) {
                        plane[am[oi]] += g[oi];
                    }
                }
            });
        };
    }
    return Tensor(out);
}

Tensor snake_conv_apply(const Tensor& features, const Tensor& coords, const Tensor& weight,
                        const std::optional<Tensor>& bias) {
    if (features.dim() != 5) throw ShapeError("snake_conv_apply: features must be rank 5");
    if (coords.dim() != 6 || coords.extent(2) != 3) {
        throw ShapeError("snake_conv_apply: coords must be [B,T,3,H,W,D], got " + shape_str(coords.shape()));
    }
    const std::int64_t B = features.extent(0), Cin = features.extent(1);
    const std::int64_t H = features.extent(2), W = features.extent(3), D = features.extent(4);
    const std::int64_t T = coords.extent(1);
    if (coords.extent(0) != B || coords.extent(3) != H || coords.extent(4) != W || coords.extent(5) != D) {
        throw ShapeError("snake_conv_apply: coords spatial axes must match features");
    }
    if (weight.dim() != 3 || weight.extent(1) != Cin || weight.extent(2) != T) {
        throw ShapeError("snake_conv_apply: weight must be [Cout," + std::to_string(Cin) + "," +
                         std::to_string(T) + "], got " + shape_str(weight.shape()));
    }
    const std::int64_t Cout = weight.extent(0);
    if (bias && (bias->dim() != 1 || bias->extent(0) != Cout)) {
        throw ShapeError("snake_conv_apply: bias must be [" + std::to_string(Cout) + "]");
    }
    auto out = bias ? result_node({B, Cout, H, W, D}, {features.node(), coords.node(), weight.node(), bias->node()})
                    : result_node({B, Cout, H, W, D}, {features.node(), coords.node(), weight.node()});
    const std::int64_t sp = H * W * D;
    const double* fp = features.values().data();
    const double* cp = coords.values().data();
    const double* wp = weight.values().data();
    const double* bp = bias ? bias->values().data() : nullptr;
    double* op = out->value.data();

    // coords layout: ((b*T + t)*3 + comp)*sp + p
    parallel_for(B * sp, [&](std::int64_t i0, std::int64_t i1) {
        std::vector<double> acc(static_cast<std::size_t>(Cout));
        for (std::int64_t bp_i = i0; bp_i < i1; ++bp_i) {
            const std::int64_t b = bp_i / sp;
            const std::int64_t p = bp_i % sp;
            for (std::int64_t co = 0; co < Cout; ++co) acc[co] = bp ? bp[co] : 0.0;
            for (std::int64_t t = 0; t < T; ++t) {
                const double* cbase = cp + ((b * T + t) * 3) * sp + p;
                const AxisTap th = axis_tap(cbase[0], H), tw = axis_tap(cbase[sp], W),
                              td = axis_tap(cbase[2 * sp], D);
                for (std::int64_t ci = 0; ci < Cin; ++ci) {
                    const double v = lerp3(fp + (b * Cin + ci) * sp, W, D, th, tw, td);
                    const double* wv = wp + (ci * T + t);
                    for (std::int64_t co = 0; co < Cout; ++co) acc[co] += wv[co * Cin * T] * v;
                }
            }
            for (std::int64_t co = 0; co < Cout; ++co) op[(b * Cout + co) * sp + p] = acc[co];
        }
    });

    if (out->requires_grad) {
        auto nf = features.node();
        auto nc = coords.node();
        auto nw = weight.node();
        auto nb = bias ? bias->node() : nullptr;
        out->backward_fn = [nf, nc, nw, nb, B, Cin, Cout, T, H, W, D, sp](detail::Node& self) {
            const double* g = self.grad.data();
            const double* fp = nf->value.data();
            const double* cp = nc->value.data();
            const double* wp = nw->value.data();
            if (wants_grad(nf)) {
                double* gf = grad_ptr(nf);
                parallel_for(B * Cin, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t bc = i0; bc < i1; ++bc) {
                        const std::int64_t b = bc / Cin;
                        const std::int64_t ci = bc % Cin;
                        double* plane = gf + bc * sp;
                        for (std::int64_t p = 0; p < sp; ++p) {
                            for (std::int64_t t = 0; t < T; ++t) {
                                const double* cbase = cp + ((b * T + t) * 3) * sp + p;
                                const AxisTap th = axis_tap(cbase[0], H), tw = axis_tap(cbase[sp], W),
                                              td = axis_tap(cbase[2 * sp], D);
                                double s = 0.0;
                                for (std::int64_t co = 0; co < Cout; ++co) {
                                    s += g[(b * Cout + co) * sp + p] * wp[(co * Cin + ci) * T + t];
                                }
                                lerp3_scatter(plane, W, D, th, tw, td, s);
                            }
                        }
                    }
                });
            }
            if (wants_grad(nc)) {
                double* gc = grad_ptr(nc);
                parallel_for(B * sp, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t bp_i = i0; bp_i < i1; ++bp_i) {
                        const std::int64_t b = bp_i / sp;
                        const std::int64_t p = bp_i % sp;
                        for (std::int64_t t = 0; t < T; ++t) {
                            const double* cbase = cp + ((b * T + t) * 3) * sp + p;
                            const AxisTap th = axis_tap(cbase[0], H), tw = axis_tap(cbase[sp], W),
                                          td = axis_tap(cbase[2 * sp], D);
                            double acc_h = 0.0, acc_w = 0.0, acc_d = 0.0;
                            for (std::int64_t ci = 0; ci < Cin; ++ci) {
                                double s = 0.0;
                                for (std::int64_t co = 0; co < Cout; ++co) {
                                    s += g[(b * Cout + co) * sp + p] * wp[(co * Cin + ci) * T + t];
                                }
                                double dh, dw, dd;
                                lerp3_coord_grad(fp + (b * Cin + ci) * sp, W, D, th, tw, td, &dh, &dw, &dd);
                                acc_h += s * dh;
                                acc_w += s * dw;
                                acc_d += s * dd;
                            }
                            double* gbase = gc + ((b * T + t) * 3) * sp + p;
                            gbase[0] += acc_h;
                            gbase[sp] += acc_w;
                            gbase[2 * sp] += acc_d;
                        }
                    }
                });
            }
            if (wants_grad(nw)) {
                double* gw = grad_ptr(nw);
                // Fixed 16-way spatial partition keeps the reduction order
                // independent of the worker count.
                const std::int64_t parts = std::min<std::int64_t>(16, sp);
                std::vector<std::vector<double>> partials(
                    static_cast<std::size_t>(parts),
                    std::vector<double>(static_cast<std::size_t>(Cout * Cin * T), 0.0));
                parallel_for(parts, [&](std::int64_t q0, std::int64_t q1) {
                    for (std::int64_t q = q0; q < q1; ++q) {
                        double* pg = partials[static_cast<std::size_t>(q)].data();
                        const std::int64_t p0 = sp * q / parts;
                        const std::int64_t p1 = sp * (q + 1) / parts;
                        for (std::int64_t b = 0; b < B; ++b) {
                            for (std::int64_t p = p0; p < p1; ++p) {
                                for (std::int64_t t = 0; t < T; ++t) {
                                    const double* cbase = cp + ((b * T + t) * 3) * sp + p;
                                    const AxisTap th = axis_tap(cbase[0], H), tw = axis_tap(cbase[sp], W),
                                                  td = axis_tap(cbase[2 * sp], D);
                                    for (std::int64_t ci = 0; ci < Cin; ++ci) {
                                        const double v = lerp3(fp + (b * Cin + ci) * sp, W, D, th, tw, td);
                                        for (std::int64_t co = 0; co < Cout; ++co) {
                                            pg[(co * Cin + ci) * T + t] +=
                                                g[(b * Cout + co) * sp + p] * v;
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                for (std::int64_t q = 0; q < parts; ++q) {
                    const double* pg = partials[static_cast<std::size_t>(q)].data();
                    for (std::int64_t i = 0; i < Cout * Cin * T; ++i) gw[i] += pg[i];
                }
            }
            if (nb && wants_grad(nb)) {
                double* gb = grad_ptr(nb);
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t co = 0; co < Cout; ++co) {
                        const double* gp = g + (b * Cout + co) * sp;
                        double acc = 0.0;
                        for (std::int64_t p = 0; p < sp; ++p) acc += gp[p];
                        gb[co] += acc;
                    }
                }
            }
        };
    }
    return Tensor(out);
}

}  // namespace mdsvm
