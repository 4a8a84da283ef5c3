#include <array>

#include "mdsvm/ops.hpp"
#include "mdsvm/threadpool.hpp"
#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

namespace {

struct ConvDims {
    std::int64_t B, Cin, H, W, D;
    std::int64_t Cout, kh, kw, kd;
    std::int64_t Ho, Wo, Do;
    int stride, padding, dilation, groups;
    std::int64_t cpg;  // input channels per group
    std::int64_t opg;  // output channels per group
};

std::int64_t out_extent(std::int64_t in, std::int64_t k, int s, int p, int dil) {
    return (in + 2 * p - dil * (k - 1) - 1) / s + 1;
}

ConvDims check_conv(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                    const Conv3dOpts& o) {
    if (input.dim() != 5) throw ShapeError("conv3d: input must be rank 5, got " + shape_str(input.shape()));
    if (weight.dim() != 5) throw ShapeError("conv3d: weight must be rank 5, got " + shape_str(weight.shape()));
    if (o.stride < 1 || o.padding < 0 || o.dilation < 1 || o.groups < 1) {
        throw ConfigError("conv3d: stride/dilation must be >= 1 and padding >= 0");
    }
    ConvDims d{};
    d.B = input.extent(0);
    d.Cin = input.extent(1);
    d.H = input.extent(2);
    d.W = input.extent(3);
    d.D = input.extent(4);
    d.Cout = weight.extent(0);
    d.kh = weight.extent(2);
    d.kw = weight.extent(3);
    d.kd = weight.extent(4);
    d.stride = o.stride;
    d.padding = o.padding;
    d.dilation = o.dilation;
    d.groups = o.groups;
    if (d.Cin % o.groups != 0 || d.Cout % o.groups != 0) {
        throw ShapeError("conv3d: channel axis 1 extents (" + std::to_string(d.Cin) + "," +
                         std::to_string(d.Cout) + ") not divisible by groups " + std::to_string(o.groups));
    }
    d.cpg = d.Cin / o.groups;
    d.opg = d.Cout / o.groups;
    if (weight.extent(1) != d.cpg) {
        throw ShapeError("conv3d: weight axis 1 has extent " + std::to_string(weight.extent(1)) +
                         " but input channel axis 1 implies " + std::to_string(d.cpg));
    }
    if (bias && (bias->dim() != 1 || bias->extent(0) != d.Cout)) {
        throw ShapeError("conv3d: bias must be [" + std::to_string(d.Cout) + "]");
    }
    d.Ho = out_extent(d.H, d.kh, o.stride, o.padding, o.dilation);
    d.Wo = out_extent(d.W, d.kw, o.stride, o.padding, o.dilation);
    d.Do = out_extent(d.D, d.kd, o.stride, o.padding, o.dilation);
    if (d.Ho <= 0 || d.Wo <= 0 || d.Do <= 0) {
        throw ShapeError("conv3d: kernel does not fit input extents " + shape_str(input.shape()));
    }
    return d;
}

// Valid kernel-tap range along one axis for output position o:
// 0 <= o*s - p + k*dil < in.
inline void tap_range(std::int64_t o, std::int64_t in, std::int64_t k, int s, int p, int dil,
                      std::int64_t& lo, std::int64_t& hi) {
    const std::int64_t base = o * s - p;
    lo = 0;
    while (lo < k && base + lo * dil < 0) ++lo;
    hi = k;
    while (hi > lo && base + (hi - 1) * dil >= in) --hi;
}

// Unit-stride, unit-dilation path: the innermost loops run contiguously along
// the D axis so they vectorize.
void conv_forward_unit(const ConvDims& d, const double* in, const double* w, const double* b,
                       double* out) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    const std::int64_t p = d.padding;
    parallel_for(d.B * d.Cout, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const std::int64_t bb = bc / d.Cout;
            const std::int64_t co = bc % d.Cout;
            const std::int64_t g = co / d.opg;
            const double* w_co = w + co * d.cpg * ksize;
            const double bias_v = b ? b[co] : 0.0;
            double* out_p = out + (bb * d.Cout + co) * sp_out;
            const double* in_b = in + (bb * d.Cin + g * d.cpg) * sp_in;
            for (std::int64_t oh = 0; oh < d.Ho; ++oh) {
                const std::int64_t khlo = std::max<std::int64_t>(0, p - oh);
                const std::int64_t khhi = std::min(d.kh, d.H + p - oh);
                for (std::int64_t ow = 0; ow < d.Wo; ++ow) {
                    const std::int64_t kwlo = std::max<std::int64_t>(0, p - ow);
                    const std::int64_t kwhi = std::min(d.kw, d.W + p - ow);
                    double* acc = out_p + (oh * d.Wo + ow) * d.Do;
                    for (std::int64_t od = 0; od < d.Do; ++od) acc[od] = bias_v;
                    for (std::int64_t ci = 0; ci < d.cpg; ++ci) {
                        const double* in_c = in_b + ci * sp_in;
                        const double* w_c = w_co + ci * ksize;
                        for (std::int64_t kh = khlo; kh < khhi; ++kh) {
                            const std::int64_t ih = oh - p + kh;
                            for (std::int64_t kw = kwlo; kw < kwhi; ++kw) {
                                const std::int64_t iw = ow - p + kw;
                                const double* in_row = in_c + (ih * d.W + iw) * d.D;
                                const double* w_row = w_c + (kh * d.kw + kw) * d.kd;
                                for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                                    const double wv = w_row[kd];
                                    const std::int64_t od_lo = std::max<std::int64_t>(0, p - kd);
                                    const std::int64_t od_hi = std::min(d.Do, d.D + p - kd);
                                    const double* src = in_row - p + kd;
                                    for (std::int64_t od = od_lo; od < od_hi; ++od) {
                                        acc[od] += wv * src[od];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

void conv_forward_generic(const ConvDims& d, const double* in, const double* w, const double* b,
                          double* out) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    parallel_for(d.B * d.Cout, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const std::int64_t bb = bc / d.Cout;
            const std::int64_t co = bc % d.Cout;
            const std::int64_t g = co / d.opg;
            const double* w_co = w + co * d.cpg * ksize;
            const double bias_v = b ? b[co] : 0.0;
            double* out_p = out + (bb * d.Cout + co) * sp_out;
            const double* in_b = in + (bb * d.Cin + g * d.cpg) * sp_in;
            std::int64_t oi = 0;
            for (std::int64_t oh = 0; oh < d.Ho; ++oh) {
                std::int64_t khlo, khhi;
                tap_range(oh, d.H, d.kh, d.stride, d.padding, d.dilation, khlo, khhi);
                for (std::int64_t ow = 0; ow < d.Wo; ++ow) {
                    std::int64_t kwlo, kwhi;
                    tap_range(ow, d.W, d.kw, d.stride, d.padding, d.dilation, kwlo, kwhi);
                    for (std::int64_t od = 0; od < d.Do; ++od, ++oi) {
                        std::int64_t kdlo, kdhi;
                        tap_range(od, d.D, d.kd, d.stride, d.padding, d.dilation, kdlo, kdhi);
                        double acc = bias_v;
                        for (std::int64_t ci = 0; ci < d.cpg; ++ci) {
                            const double* in_c = in_b + ci * sp_in;
                            const double* w_c = w_co + ci * ksize;
                            for (std::int64_t kh = khlo; kh < khhi; ++kh) {
                                const std::int64_t ih = oh * d.stride - d.padding + kh * d.dilation;
                                for (std::int64_t kw = kwlo; kw < kwhi; ++kw) {
                                    const std::int64_t iw = ow * d.stride - d.padding + kw * d.dilation;
                                    const double* in_row = in_c + (ih * d.W + iw) * d.D;
                                    const double* w_row = w_c + (kh * d.kw + kw) * d.kd;
                                    const std::int64_t id0 = od * d.stride - d.padding;
                                    for (std::int64_t kd = kdlo; kd < kdhi; ++kd) {
                                        acc += in_row[id0 + kd * d.dilation] * w_row[kd];
                                    }
                                }
                            }
                        }
                        out_p[oi] = acc;
                    }
                }
            }
        }
    });
}

void conv_forward(const ConvDims& d, const double* in, const double* w, const double* b, double* out) {
    if (d.stride == 1 && d.dilation == 1) {
        conv_forward_unit(d, in, w, b, out);
    } else {
        conv_forward_generic(d, in, w, b, out);
    }
}

// Unit-stride gather: each input row accumulates shifted output rows weighted
// by the flipped kernel.
void conv_backward_input_unit(const ConvDims& d, const double* gout, const double* w, double* gin) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    const std::int64_t p = d.padding;
    parallel_for(d.B * d.Cin, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const std::int64_t bb = bc / d.Cin;
            const std::int64_t ci = bc % d.Cin;
            const std::int64_t g = ci / d.cpg;
            const std::int64_t ci_g = ci % d.cpg;
            double* gin_p = gin + (bb * d.Cin + ci) * sp_in;
            for (std::int64_t ih = 0; ih < d.H; ++ih) {
                for (std::int64_t iw = 0; iw < d.W; ++iw) {
                    double* acc = gin_p + (ih * d.W + iw) * d.D;
                    for (std::int64_t oc = 0; oc < d.opg; ++oc) {
                        const std::int64_t co = g * d.opg + oc;
                        const double* go_c = gout + (bb * d.Cout + co) * sp_out;
                        const double* w_c = w + (co * d.cpg + ci_g) * ksize;
                        for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                            const std::int64_t oh = ih + p - kh;
                            if (oh < 0 || oh >= d.Ho) continue;
                            for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                                const std::int64_t ow = iw + p - kw;
                                if (ow < 0 || ow >= d.Wo) continue;
                                const double* go_row = go_c + (oh * d.Wo + ow) * d.Do;
                                const double* w_row = w_c + (kh * d.kw + kw) * d.kd;
                                for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                                    const double wv = w_row[kd];
                                    // od = id + p - kd must lie in [0, Do)
                                    const std::int64_t id_lo = std::max<std::int64_t>(0, kd - p);
                                    const std::int64_t id_hi = std::min(d.D, d.Do + kd - p);
                                    const double* src = go_row + p - kd;
                                    for (std::int64_t id = id_lo; id < id_hi; ++id) {
                                        acc[id] += wv * src[id];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

void conv_backward_input_generic(const ConvDims& d, const double* gout, const double* w, double* gin) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    // Gather form: every input voxel sums the outputs its value fed.
    parallel_for(d.B * d.Cin, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const std::int64_t bb = bc / d.Cin;
            const std::int64_t ci = bc % d.Cin;
            const std::int64_t g = ci / d.cpg;
            const std::int64_t ci_g = ci % d.cpg;
            double* gin_p = gin + (bb * d.Cin + ci) * sp_in;
            std::int64_t ii = 0;
            for (std::int64_t ih = 0; ih < d.H; ++ih) {
                for (std::int64_t iw = 0; iw < d.W; ++iw) {
                    for (std::int64_t id = 0; id < d.D; ++id, ++ii) {
                        double acc = 0.0;
                        for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                            const std::int64_t th = ih + d.padding - kh * d.dilation;
                            if (th < 0 || th % d.stride) continue;
                            const std::int64_t oh = th / d.stride;
                            if (oh >= d.Ho) continue;
                            for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                                const std::int64_t tw = iw + d.padding - kw * d.dilation;
                                if (tw < 0 || tw % d.stride) continue;
                                const std::int64_t ow = tw / d.stride;
                                if (ow >= d.Wo) continue;
                                for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                                    const std::int64_t td = id + d.padding - kd * d.dilation;
                                    if (td < 0 || td % d.stride) continue;
                                    const std::int64_t od = td / d.stride;
                                    if (od >= d.Do) continue;
                                    const std::int64_t k = (kh * d.kw + kw) * d.kd + kd;
                                    for (std::int64_t oc = 0; oc < d.opg; ++oc) {
                                        const std::int64_t co = g * d.opg + oc;
                                        acc += gout[((bb * d.Cout + co) * sp_out + (oh * d.Wo + ow) * d.Do + od)] *
                                               w[(co * d.cpg + ci_g) * ksize + k];
                                    }
                                }
                            }
                        }
                        gin_p[ii] += acc;
                    }
                }
            }
        }
    });
}

void conv_backward_input(const ConvDims& d, const double* gout, const double* w, double* gin) {
    if (d.stride == 1 && d.dilation == 1) {
        conv_backward_input_unit(d, gout, w, gin);
    } else {
        conv_backward_input_generic(d, gout, w, gin);
    }
}

void conv_backward_weight_unit(const ConvDims& d, const double* gout, const double* in, double* gw) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    const std::int64_t p = d.padding;
    parallel_for(d.Cout * d.cpg, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t cc = i0; cc < i1; ++cc) {
            const std::int64_t co = cc / d.cpg;
            const std::int64_t ci_g = cc % d.cpg;
            const std::int64_t g = co / d.opg;
            const std::int64_t ci = g * d.cpg + ci_g;
            double* gw_p = gw + (co * d.cpg + ci_g) * ksize;
            for (std::int64_t bb = 0; bb < d.B; ++bb) {
                const double* go_c = gout + (bb * d.Cout + co) * sp_out;
                const double* in_c = in + (bb * d.Cin + ci) * sp_in;
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                        for (std::int64_t oh = std::max<std::int64_t>(0, p - kh);
                             oh < std::min(d.Ho, d.H + p - kh); ++oh) {
                            const std::int64_t ih = oh - p + kh;
                            for (std::int64_t ow = std::max<std::int64_t>(0, p - kw);
                                 ow < std::min(d.Wo, d.W + p - kw); ++ow) {
                                const std::int64_t iw = ow - p + kw;
                                const double* go_row = go_c + (oh * d.Wo + ow) * d.Do;
                                const double* in_row = in_c + (ih * d.W + iw) * d.D;
                                double* gw_row = gw_p + (kh * d.kw + kw) * d.kd;
                                for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                                    const std::int64_t od_lo = std::max<std::int64_t>(0, p - kd);
                                    const std::int64_t od_hi = std::min(d.Do, d.D + p - kd);
                                    const double* src = in_row - p + kd;
                                    double acc = 0.0;
                                    for (std::int64_t od = od_lo; od < od_hi; ++od) {
                                        acc += go_row[od] * src[od];
                                    }
                                    gw_row[kd] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

void conv_backward_weight_generic(const ConvDims& d, const double* gout, const double* in, double* gw) {
    const std::int64_t sp_in = d.H * d.W * d.D;
    const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
    const std::int64_t ksize = d.kh * d.kw * d.kd;
    parallel_for(d.Cout * d.cpg, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t cc = i0; cc < i1; ++cc) {
            const std::int64_t co = cc / d.cpg;
            const std::int64_t ci_g = cc % d.cpg;
            const std::int64_t g = co / d.opg;
            const std::int64_t ci = g * d.cpg + ci_g;
            double* gw_p = gw + (co * d.cpg + ci_g) * ksize;
            for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                    for (std::int64_t kd = 0; kd < d.kd; ++kd) {
                        double acc = 0.0;
                        for (std::int64_t bb = 0; bb < d.B; ++bb) {
                            const double* go = gout + (bb * d.Cout + co) * sp_out;
                            const double* in_c = in + (bb * d.Cin + ci) * sp_in;
                            std::int64_t oi = 0;
                            for (std::int64_t oh = 0; oh < d.Ho; ++oh) {
                                const std::int64_t ih = oh * d.stride - d.padding + kh * d.dilation;
                                if (ih < 0 || ih >= d.H) {
                                    oi += d.Wo * d.Do;
                                    continue;
                                }
                                for (std::int64_t ow = 0; ow < d.Wo; ++ow) {
                                    const std::int64_t iw = ow * d.stride - d.padding + kw * d.dilation;
                                    if (iw < 0 || iw >= d.W) {
                                        oi += d.Do;
                                        continue;
                                    }
                                    const double* in_row = in_c + (ih * d.W + iw) * d.D;
                                    for (std::int64_t od = 0; od < d.Do; ++od, ++oi) {
                                        const std::int64_t id = od * d.stride - d.padding + kd * d.dilation;
                                        if (id < 0 || id >= d.D) continue;
                                        acc += go[oi] * in_row[id];
                                    }
                                }
                            }
                        }
                        gw_p[(kh * d.kw + kw) * d.kd + kd] += acc;
                    }
                }
            }
        }
    });
}

void conv_backward_weight(const ConvDims& d, const double* gout, const double* in, double* gw) {
    if (d.stride == 1 && d.dilation == 1) {
        conv_backward_weight_unit(d, gout, in, gw);
    } else {
        conv_backward_weight_generic(d, gout, in, gw);
    }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv3dOpts& opts) {
    const ConvDims d = check_conv(input, weight, bias, opts);
    auto out = bias ? result_node({d.B, d.Cout, d.Ho, d.Wo, d.Do}, {input.node(), weight.node(), bias->node()})
                    : result_node({d.B, d.Cout, d.Ho, d.Wo, d.Do}, {input.node(), weight.node()});
    conv_forward(d, input.values().data(), weight.values().data(),
                 bias ? bias->values().data() : nullptr, out->value.data());
    if (out->requires_grad) {
        auto nin = input.node();
        auto nw = weight.node();
        auto nb = bias ? bias->node() : nullptr;
        out->backward_fn = [d, nin, nw, nb](detail::Node& self) {
            const double* g = self.grad.data();
            if (wants_grad(nin)) conv_backward_input(d, g, nw->value.data(), grad_ptr(nin));
            if (wants_grad(nw)) conv_backward_weight(d, g, nin->value.data(), grad_ptr(nw));
            if (nb && wants_grad(nb)) {
                double* gb = grad_ptr(nb);
                const std::int64_t sp_out = d.Ho * d.Wo * d.Do;
                for (std::int64_t bb = 0; bb < d.B; ++bb) {
                    for (std::int64_t co = 0; co < d.Cout; ++co) {
                        const double* go = g + (bb * d.Cout + co) * sp_out;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < sp_out; ++i) acc += go[i];
                        gb[co] += acc;
                    }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor dwconv3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                int padding) {
    const std::int64_t c = input.dim() == 5 ? input.extent(1) : -1;
    if (c < 0 || weight.dim() != 5 || weight.extent(0) != c || weight.extent(1) != 1) {
        throw ShapeError("dwconv3d: weight must be [C,1,k,k,k] matching input channel axis 1");
    }
    Conv3dOpts o;
    o.padding = padding;
    o.groups = static_cast<int>(c);
    return conv3d(input, weight, bias, o);
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                        int stride) {
    if (input.dim() != 5 || weight.dim() != 5) {
        throw ShapeError("conv_transpose3d: input and weight must be rank 5");
    }
    if (stride < 1) throw ConfigError("conv_transpose3d: stride must be >= 1");
    const std::int64_t B = input.extent(0), Cin = input.extent(1);
    const std::int64_t H = input.extent(2), W = input.extent(3), D = input.extent(4);
    if (weight.extent(0) != Cin) {
        throw ShapeError("conv_transpose3d: weight axis 0 has extent " + std::to_string(weight.extent(0)) +
                         " but input channel axis 1 is " + std::to_string(Cin));
    }
    const std::int64_t Cout = weight.extent(1);
    const std::int64_t k = weight.extent(2);
    if (weight.extent(3) != k || weight.extent(4) != k) {
        throw ShapeError("conv_transpose3d: kernel must be cubic");
    }
    if (bias && (bias->dim() != 1 || bias->extent(0) != Cout)) {
        throw ShapeError("conv_transpose3d: bias must be [" + std::to_string(Cout) + "]");
    }
    const std::int64_t Ho = (H - 1) * stride + k;
    const std::int64_t Wo = (W - 1) * stride + k;
    const std::int64_t Do = (D - 1) * stride + k;
    auto out = bias ? result_node({B, Cout, Ho, Wo, Do}, {input.node(), weight.node(), bias->node()})
                    : result_node({B, Cout, Ho, Wo, Do}, {input.node(), weight.node()});

    const std::int64_t sp_in = H * W * D;
    const std::int64_t sp_out = Ho * Wo * Do;
    const double* in = input.values().data();
    const double* w = weight.values().data();
    const double* bp = bias ? bias->values().data() : nullptr;
    double* op = out->value.data();
    // Gather form over output voxels: contributing taps satisfy o = i*s + kk.
    auto taps_for = [&](std::int64_t o, std::int64_t in_ext, std::vector<std::pair<std::int64_t, std::int64_t>>& taps) {
        taps.clear();
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const std::int64_t t = o - kk;
            if (t < 0 || t % stride) continue;
            const std::int64_t i = t / stride;
            if (i < in_ext) taps.emplace_back(i, kk);
        }
    };
    parallel_for(B * Cout, [&](std::int64_t i0, std::int64_t i1) {
        std::vector<std::pair<std::int64_t, std::int64_t>> th, tw, td;
        for (std::int64_t bc = i0; bc < i1; ++bc) {
            const std::int64_t bb = bc / Cout;
            const std::int64_t co = bc % Cout;
            double* out_p = op + (bb * Cout + co) * sp_out;
            std::int64_t oi = 0;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
                taps_for(oh, H, th);
                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    taps_for(ow, W, tw);
                    for (std::int64_t od = 0; od < Do; ++od, ++oi) {
                        taps_for(od, D, td);
                        double acc = bp ? bp[co] : 0.0;
                        for (std::int64_t ci = 0; ci < Cin; ++ci) {
                            const double* in_c = in + (bb * Cin + ci) * sp_in;
                            const double* w_c = w + (ci * Cout + co) * k * k * k;
                            for (auto [ih, kh] : th) {
                                for (auto [iw, kw] : tw) {
                                    for (auto [id, kd] : td) {
                                        acc += in_c[(ih * W + iw) * D + id] * w_c[(kh * k + kw) * k + kd];
                                    }
                                }
                            }
                        }
                        out_p[oi] = acc;
                    }
                }
            }
        }
    });
    if (out->requires_grad) {
        auto nin = input.node();
        auto nw = weight.node();
        auto nb = bias ? bias->node() : nullptr;
        const int s = stride;
        out->backward_fn = [nin, nw, nb, B, Cin, Cout, H, W, D, Ho, Wo, Do, k, s](detail::Node& self) {
            const double* g = self.grad.data();
            const std::int64_t sp_in = H * W * D;
            const std::int64_t sp_out = Ho * Wo * Do;
            if (wants_grad(nin)) {
                double* gin = grad_ptr(nin);
                const double* w = nw->value.data();
                parallel_for(B * Cin, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t bc = i0; bc < i1; ++bc) {
                        const std::int64_t bb = bc / Cin;
                        const std::int64_t ci = bc % Cin;
                        double* gin_p = gin + (bb * Cin + ci) * sp_in;
                        std::int64_t ii = 0;
                        for (std::int64_t ih = 0; ih < H; ++ih) {
                            for (std::int64_t iw = 0; iw < W; ++iw) {
                                for (std::int64_t id = 0; id < D; ++id, ++ii) {
                                    double acc = 0.0;
                                    for (std::int64_t co = 0; co < Cout; ++co) {
                                        const double* g_c = g + (bb * Cout + co) * sp_out;
                                        const double* w_c = nw->value.data() + (ci * Cout + co) * k * k * k;
                                        for (std::int64_t kh = 0; kh < k; ++kh) {
                                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                                for (std::int64_t kd = 0; kd < k; ++kd) {
                                                    acc += g_c[((ih * s + kh) * Wo + iw * s + kw) * Do + id * s + kd] *
                                                           w_c[(kh * k + kw) * k + kd];
                                                }
                                            }
                                        }
                                    }
                                    gin_p[ii] += acc;
                                }
                            }
                        }
                    }
                });
                (void)w;
            }
            if (wants_grad(nw)) {
                double* gw = grad_ptr(nw);
                const double* in = nin->value.data();
                parallel_for(Cin * Cout, [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t cc = i0; cc < i1; ++cc) {
                        const std::int64_t ci = cc / Cout;
                        const std::int64_t co = cc % Cout;
                        double* gw_c = gw + (ci * Cout + co) * k * k * k;
                        for (std::int64_t kh = 0; kh < k; ++kh) {
                            for (std::int64_t kw = 0; kw < k; ++kw) {
                                for (std::int64_t kd = 0; kd < k; ++kd) {
                                    double acc = 0.0;
                                    for (std::int64_t bb = 0; bb < B; ++bb) {
                                        const double* in_c = in + (bb * Cin + ci) * sp_in;
                                        const double* g_c = g + (bb * Cout + co) * sp_out;
                                        std::int64_t ii = 0;
                                        for (std::int64_t ih = 0; ih < H; ++ih) {
                                            for (std::int64_t iw = 0; iw < W; ++iw) {
                                                for (std::int64_t id = 0; id < D; ++id, ++ii) {
                                                    acc += in_c[ii] *
                                                           g_c[((ih * s + kh) * Wo + iw * s + kw) * Do + id * s + kd];
                                                }
                                            }
                                        }
                                    }
                                    gw_c[(kh * k + kw) * k + kd] += acc;
                                }
                            }
                        }
                    }
                });
            }
            if (nb && wants_grad(nb)) {
                double* gb = grad_ptr(nb);
                for (std::int64_t bb = 0; bb < B; ++bb) {
                    for (std::int64_t co = 0; co < Cout; ++co) {
                        const double* g_c = g + (bb * Cout + co) * sp_out;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < sp_out; ++i) acc += g_c[i];
                        gb[co] += acc;
                    }
                }
            }
        };
    }
    return Tensor(out);
}

}  // namespace mdsvm
