#pragma once

#include <memory>
#include <utility>

#include "mdsvm/tensor.hpp"

namespace mdsvm::detail {

inline std::shared_ptr<Node> result_node(Shape shape, std::initializer_list<std::shared_ptr<Node>> parents) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    auto n = make_node(std::move(shape), rg);
    n->parents.assign(parents.begin(), parents.end());
    return n;
}

inline bool wants_grad(const std::shared_ptr<Node>& p) { return p->requires_grad; }

inline double* grad_ptr(const std::shared_ptr<Node>& p) {
    p->ensure_grad();
    return p->grad.data();
}

}  // namespace mdsvm::detail
