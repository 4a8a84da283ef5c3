#include "mdsvm/ssm.hpp"

#include <cmath>

#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

Tensor selective_scan(const Tensor& u, const Tensor& Bt, const Tensor& Ct, const Tensor& delta,
                      const Tensor& A, const Tensor& D) {
    if (u.dim() != 2 || Bt.dim() != 2 || Ct.dim() != 2 || delta.dim() != 2 || A.dim() != 2 || D.dim() != 1) {
        throw ShapeError("selective_scan: u/Bt/Ct/delta/A must be rank 2 and D rank 1");
    }
    const std::int64_t L = u.extent(0), C = u.extent(1);
    const std::int64_t N = Bt.extent(1);
    if (Bt.extent(0) != L || Ct.extent(0) != L || Ct.extent(1) != N) {
        throw ShapeError("selective_scan: Bt/Ct must be [" + std::to_string(L) + "," + std::to_string(N) + "]");
    }
    if (delta.extent(0) != L || delta.extent(1) != C) {
        throw ShapeError("selective_scan: delta must be [" + std::to_string(L) + "," + std::to_string(C) + "]");
    }
    if (A.extent(0) != C || A.extent(1) != N || D.extent(0) != C) {
        throw ShapeError("selective_scan: A must be [" + std::to_string(C) + "," + std::to_string(N) +
                         "] and D [" + std::to_string(C) + "]");
    }
    for (const Tensor* t : {&u, &Bt, &Ct, &delta, &A, &D}) {
        if (!t->all_finite()) throw ContractError("selective_scan: non-finite input");
    }

    auto out = result_node({L, C}, {u.node(), Bt.node(), Ct.node(), delta.node(), A.node(), D.node()});
    // State trajectory kept for backward: h[t, c, n].
    out->stash.assign(static_cast<std::size_t>(L * C * N), 0.0);
    const double* pu = u.values().data();
    const double* pb = Bt.values().data();
    const double* pc = Ct.values().data();
    const double* pd = delta.values().data();
    const double* pa = A.values().data();
    const double* pD = D.values().data();
    double* h = out->stash.data();
    double* y = out->value.data();
    for (std::int64_t t = 0; t < L; ++t) {
        const double* h_prev = t ? h + (t - 1) * C * N : nullptr;
        double* h_t = h + t * C * N;
        for (std::int64_t c = 0; c < C; ++c) {
            const double dt = pd[t * C + c];
            const double ut = pu[t * C + c];
            const double du = dt * ut;
            const double* a_c = pa + c * N;
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                const double abar = std::exp(dt * a_c[n]);
                const double hv = (h_prev ? abar * h_prev[c * N + n] : 0.0) + du * pb[t * N + n];
                h_t[c * N + n] = hv;
                acc += pc[t * N + n] * hv;
            }
            y[t * C + c] = acc + pD[c] * ut;
        }
    }

    if (out->requires_grad) {
        auto nu = u.node(), nb = Bt.node(), nc = Ct.node(), nd = delta.node(), na = A.node(), nD = D.node();
        out->backward_fn = [nu, nb, nc, nd, na, nD, L, C, N](detail::Node& self) {
            const double* g = self.grad.data();
            const double* h = self.stash.data();
            const double* pu = nu->value.data();
            const double* pb = nb->value.data();
            const double* pc = nc->value.data();
            const double* pd = nd->value.data();
            const double* pa = na->value.data();
            const double* pD = nD->value.data();
            double* gu = wants_grad(nu) ? grad_ptr(nu) : nullptr;
            double* gb = wants_grad(nb) ? grad_ptr(nb) : nullptr;
            double* gc = wants_grad(nc) ? grad_ptr(nc) : nullptr;
            double* gd = wants_grad(nd) ? grad_ptr(nd) : nullptr;
            double* ga = wants_grad(na) ? grad_ptr(na) : nullptr;
            double* gD = wants_grad(nD) ? grad_ptr(nD) : nullptr;

            std::vector<double> lam(static_cast<std::size_t>(C * N), 0.0);  // dL/dh_t running adjoint
            for (std::int64_t t = L - 1; t >= 0; --t) {
                const double* h_t = h + t * C * N;
                const double* h_prev = t ? h + (t - 1) * C * N : nullptr;
                for (std::int64_t c = 0; c < C; ++c) {
                    const double gy = g[t * C + c];
                    const double dt = pd[t * C + c];
                    const double ut = pu[t * C + c];
                    const double* a_c = pa + c * N;
                    double* lam_c = lam.data() + c * N;
                    double d_dt = 0.0;
                    double d_ut = gy * pD[c];
                    if (gD) gD[c] += gy * ut;
                    for (std::int64_t n = 0; n < N; ++n) {
                        const double hv = h_t[c * N + n];
                        if (gc) gc[t * N + n] += gy * hv;
                        double l = lam_c[n] + gy * pc[t * N + n];
                        // h_t = abar*h_prev + dt*B*u
                        const double abar = std::exp(dt * a_c[n]);
                        const double hp = h_prev ? h_prev[c * N + n] : 0.0;
                        const double d_abar = l * hp;
                        d_dt += d_abar * abar * a_c[n] + l * pb[t * N + n] * ut;
                        if (ga) ga[c * N + n] += d_abar * abar * dt;
                        if (gb) gb[t * N + n] += l * dt * ut;
                        d_ut += l * dt * pb[t * N + n];
                        lam_c[n] = l * abar;  // propagate to h_{t-1}
                    }
                    if (gd) gd[t * C + c] += d_dt;
                    if (gu) gu[t * C + c] += d_ut;
                }
            }
        };
    }
    return Tensor(out);
}

std::vector<double> selective_scan_chunked(std::span<const double> u, std::span<const double> Bt,
                                           std::span<const double> Ct, std::span<const double> delta,
                                           std::span<const double> A, std::span<const double> D,
                                           std::int64_t L, std::int64_t C, std::int64_t N,
                                           std::int64_t chunk) {
    if (chunk < 1) chunk = 1;
    std::vector<double> y(static_cast<std::size_t>(L * C), 0.0);
    const std::int64_t n_chunks = (L + chunk - 1) / chunk;
    // The per-step state update h -> a.h + b is an affine map; a chunk composes
    // to (prod a, accumulated b). First pass: per-chunk composition. Second
    // pass: carry states across chunks and emit outputs.
    std::vector<double> carry(static_cast<std::size_t>((n_chunks + 1) * C * N), 0.0);
    for (std::int64_t q = 0; q < n_chunks; ++q) {
        const std::int64_t t0 = q * chunk;
        const std::int64_t t1 = std::min(L, t0 + chunk);
        // chunk-local affine composition: h_out = ca . h_in + cb
        std::vector<double> ca(static_cast<std::size_t>(C * N), 1.0);
        std::vector<double> cb(static_cast<std::size_t>(C * N), 0.0);
        for (std::int64_t t = t0; t < t1; ++t) {
            for (std::int64_t c = 0; c < C; ++c) {
                const double dt = delta[t * C + c];
                const double du = dt * u[t * C + c];
                for (std::int64_t n = 0; n < N; ++n) {
                    const double abar = std::exp(dt * A[c * N + n]);
                    ca[c * N + n] *= abar;
                    cb[c * N + n] = abar * cb[c * N + n] + du * Bt[t * N + n];
                }
            }
        }
        const double* h_in = carry.data() + q * C * N;
        double* h_out = carry.data() + (q + 1) * C * N;
        for (std::int64_t i = 0; i < C * N; ++i) h_out[i] = ca[i] * h_in[i] + cb[i];
    }
    for (std::int64_t q = 0; q < n_chunks; ++q) {
        const std::int64_t t0 = q * chunk;
        const std::int64_t t1 = std::min(L, t0 + chunk);
        std::vector<double> h(carry.begin() + q * C * N, carry.begin() + (q + 1) * C * N);
        for (std::int64_t t = t0; t < t1; ++t) {
            for (std::int64_t c = 0; c < C; ++c) {
                const double dt = delta[t * C + c];
                const double ut = u[t * C + c];
                const double du = dt * ut;
                double acc = 0.0;
                for (std::int64_t n = 0; n < N; ++n) {
                    const double abar = std::exp(dt * A[c * N + n]);
                    h[c * N + n] = abar * h[c * N + n] + du * Bt[t * N + n];
                    acc += Ct[t * N + n] * h[c * N + n];
                }
                y[t * C + c] = acc + D[c] * ut;
            }
        }
    }
    return y;
}

Tensor ssm_apply(const Tensor& x, const SsmParams& p) {
    Tensor bt = linear(x, p.w_b);
    Tensor ct = linear(x, p.w_c);
    Tensor dt = softplus(linear(x, p.w_delta, p.b_delta));
    Tensor a = neg(exp_op(p.a_log));
    Tensor d = p.use_skip ? p.d_skip : Tensor::zeros({p.d_skip.extent(0)});
    return selective_scan(x, bt, ct, dt, a, d);
}

Tensor vssm_forward(const Tensor& seq, const VssmBlock& block,
                    const std::array<std::int64_t, 3>& spatial) {
    if (seq.dim() != 2) throw ShapeError("vssm_forward: sequence must be [L,C]");
    const std::int64_t L = seq.extent(0);
    const std::int64_t HWD = spatial[0] * spatial[1] * spatial[2];
    if (L != HWD) {
        throw ContractError("vssm_forward: sequence length " + std::to_string(L) +
                            " does not match spatial extents product " + std::to_string(HWD));
    }
    const std::int64_t Ce = block.w_in1.extent(0);

    // Branch 1: expand, depthwise conv on re-spatialized features, SiLU, scan, LN.
    Tensor b1 = linear(seq, block.w_in1, block.b_in1);
    Tensor sp = permute(reshape(b1, {1, spatial[0], spatial[1], spatial[2], Ce}), {0, 4, 1, 2, 3});
    Tensor dc = dwconv3d(sp, block.dw_w, block.dw_b, 1);
    Tensor back = reshape(permute(dc, {0, 2, 3, 4, 1}), {L, Ce});
    Tensor x1 = silu(back);
    Tensor scanned = ssm_apply(x1, block.ssm);
    Tensor w1 = layer_norm(scanned, block.ln_gain, block.ln_bias);

    // Branch 2: expand and gate.
    Tensor w2 = silu(linear(seq, block.w_in2, block.b_in2));

    return linear(hadamard(w1, w2), block.w_out, block.b_out);
}

Tensor rvm_forward(const Tensor& x, const RvmLayer& layer) {
    if (x.dim() != 5) throw ShapeError("rvm_forward: input must be [B,C,H,W,D]");
    const std::int64_t B = x.extent(0), C = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3), D = x.extent(4);
    const std::int64_t L = H * W * D;
    const std::int64_t Cout = layer.proj_w.extent(0);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(B));
    for (std::int64_t b = 0; b < B; ++b) {
        Tensor xb = B == 1 ? x : slice(x, 0, b, 1);
        Tensor seq = reshape(permute(xb, {0, 2, 3, 4, 1}), {L, C});
        Tensor normed = layer_norm(seq, layer.ln_in_gain, layer.ln_in_bias);
        Tensor y = vssm_forward(normed, layer.vssm, {H, W, D});
        Tensor ytilde = add(y, scale_last(seq, layer.res_scale));
        Tensor proj = linear(layer_norm(ytilde, layer.ln_post_gain, layer.ln_post_bias), layer.proj_w,
                             layer.proj_b);
        outs.push_back(permute(reshape(proj, {1, H, W, D, Cout}), {0, 4, 1, 2, 3}));
    }
    return outs.size() == 1 ? outs[0] : concat(outs, 0);
}

}  // namespace mdsvm
