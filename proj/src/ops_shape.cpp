#include <cstring>
#include <numeric>

#include "mdsvm/ops.hpp"
#include "op_common.hpp"

namespace mdsvm {

using detail::grad_ptr;
using detail::result_node;
using detail::wants_grad;

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto out = result_node(std::move(shape), {x.node()});
    out->value = x.node()->value;
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx](detail::Node& self) {
            double* gx = grad_ptr(nx);
            for (std::int64_t i = 0; i < self.numel(); ++i) gx[i] += self.grad[i];
        };
    }
    return Tensor(out);
}

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Walks output flat indices in order, handing over the matching input index.
template <typename Fn>
void for_each_permuted(const Shape& in_shape, const std::vector<int>& axes, Fn fn) {
    const int rank = static_cast<int>(in_shape.size());
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
    const auto in_strides = row_major_strides(in_shape);
    std::vector<std::int64_t> strides(rank);
    for (int i = 0; i < rank; ++i) strides[i] = in_strides[axes[i]];
    const std::int64_t n = shape_numel(in_shape);
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t src = 0;
    for (std::int64_t o = 0; o < n; ++o) {
        fn(o, src);
        for (int i = rank - 1; i >= 0; --i) {
            ++idx[i];
            src += strides[i];
            if (idx[i] < out_shape[i]) break;
            idx[i] = 0;
            src -= strides[i] * out_shape[i];
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int rank = x.dim();
    if (static_cast<int>(axes.size()) != rank) {
        throw ShapeError("permute: axes list must have rank " + std::to_string(rank) + " entries");
    }
    std::vector<bool> seen(rank, false);
    for (int a : axes) {
        if (a < 0 || a >= rank || seen[a]) throw ShapeError("permute: invalid axes permutation");
        seen[a] = true;
    }
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) out_shape[i] = x.extent(axes[i]);
    auto out = result_node(out_shape, {x.node()});
    const double* px = x.values().data();
    double* po = out->value.data();
    for_each_permuted(x.shape(), axes, [&](std::int64_t o, std::int64_t src) { po[o] = px[src]; });
    if (out->requires_grad) {
        auto nx = x.node();
        Shape in_shape = x.shape();
        out->backward_fn = [nx, in_shape, axes](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double* g = self.grad.data();
            for_each_permuted(in_shape, axes, [&](std::int64_t o, std::int64_t src) { gx[src] += g[o]; });
        };
    }
    return Tensor(out);
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t len) {
    const int rank = x.dim();
    if (axis < 0 || axis >= rank) throw ShapeError("slice: axis out of range");
    if (start < 0 || len <= 0 || start + len > x.extent(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of bounds for axis " + std::to_string(axis) + " with extent " +
                         std::to_string(x.extent(axis)));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    auto out = result_node(out_shape, {x.node()});

    // Treat the tensor as [outer, extent(axis), inner] and copy a strip.
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.extent(i);
    for (int i = axis + 1; i < rank; ++i) inner *= x.extent(i);
    const std::int64_t ax_len = x.extent(axis);
    const double* px = x.values().data();
    for (std::int64_t ou = 0; ou < outer; ++ou) {
        const double* src = px + (ou * ax_len + start) * inner;
        double* dst = out->value.data() + ou * len * inner;
        std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(len * inner));
    }
    if (out->requires_grad) {
        auto nx = x.node();
        out->backward_fn = [nx, outer, inner, ax_len, start, len](detail::Node& self) {
            double* gx = grad_ptr(nx);
            const double* g = self.grad.data();
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                double* dst = gx + (ou * ax_len + start) * inner;
                const double* src = g + ou * len * inner;
                for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rank = parts[0].dim();
    if (axis < 0 || axis >= rank) throw ShapeError("concat: axis out of range");
    std::int64_t cat_extent = 0;
    for (const auto& p : parts) {
        if (p.dim() != rank) throw ShapeError("concat: rank mismatch between inputs");
        for (int i = 0; i < rank; ++i) {
            if (i != axis && p.extent(i) != parts[0].extent(i)) {
                throw ShapeError("concat: inputs disagree at axis " + std::to_string(i));
            }
        }
        cat_extent += p.extent(axis);
    }
    Shape out_shape = parts[0].shape();
    out_shape[axis] = cat_extent;

    bool rg = false;
    std::vector<std::shared_ptr<detail::Node>> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
        parents.push_back(p.node());
        rg = rg || p.requires_grad();
    }
    auto out = detail::make_node(out_shape, rg);
    out->parents = parents;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];

    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t plen = p.extent(axis);
        const double* src = p.values().data();
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            double* dst = out->value.data() + (ou * cat_extent + offset) * inner;
            std::memcpy(dst, src + ou * plen * inner, sizeof(double) * static_cast<std::size_t>(plen * inner));
        }
        offset += plen;
    }
    if (out->requires_grad) {
        auto offsets = std::make_shared<std::vector<std::int64_t>>();
        std::int64_t off = 0;
        for (const auto& p : parts) {
            offsets->push_back(off);
            off += p.extent(axis);
        }
        out->backward_fn = [outer, inner, cat_extent, offsets](detail::Node& self) {
            const double* g = self.grad.data();
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& p = self.parents[k];
                if (!wants_grad(p)) continue;
                double* gp = grad_ptr(p);
                const std::int64_t plen = p->numel() / (outer * inner);
                const std::int64_t off = (*offsets)[k];
                for (std::int64_t ou = 0; ou < outer; ++ou) {
                    const double* src = g + (ou * cat_extent + off) * inner;
                    double* dst = gp + ou * plen * inner;
                    for (std::int64_t i = 0; i < plen * inner; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return Tensor(out);
}

}  // namespace mdsvm
