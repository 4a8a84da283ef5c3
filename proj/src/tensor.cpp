#include "mdsvm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mdsvm {

namespace {
std::atomic<std::uint64_t> g_seq{1};
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
}

std::shared_ptr<Node> make_node(Shape shape, bool requires_grad) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] <= 0) {
            throw ShapeError("tensor extent at axis " + std::to_string(i) + " must be positive, got " +
                             std::to_string(shape[i]));
        }
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(shape_numel(n->shape)), 0.0);
    n->requires_grad = requires_grad;
    n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(detail::make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    auto n = detail::make_node(std::move(shape), requires_grad);
    std::fill(n->value.begin(), n->value.end(), fill);
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    auto n = detail::make_node(std::move(shape), requires_grad);
    if (data.size() != n->value.size()) {
        throw ShapeError("from_data: got " + std::to_string(data.size()) + " values for shape " +
                         shape_str(n->shape));
    }
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

std::span<const double> Tensor::grad() const {
    if (n_->grad.empty()) throw ContractError("tensor has no gradient buffer");
    return n_->grad;
}

std::span<double> Tensor::mutable_grad() {
    n_->ensure_grad();
    return n_->grad;
}

void Tensor::zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, shape is " + shape_str(shape()));
    return n_->value[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != dim()) {
        throw ShapeError("at(): got " + std::to_string(idx.size()) + " indices for rank " +
                         std::to_string(dim()));
    }
    std::int64_t flat = 0;
    int ax = 0;
    for (auto i : idx) {
        const std::int64_t e = n_->shape[static_cast<std::size_t>(ax)];
        if (i < 0 || i >= e) {
            throw ShapeError("at(): index " + std::to_string(i) + " out of range for axis " +
                             std::to_string(ax));
        }
        flat = flat * e + i;
        ++ax;
    }
    return n_->value[static_cast<std::size_t>(flat)];
}

bool Tensor::all_finite() const {
    for (double v : n_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    auto root = loss.node();
    if (!root->requires_grad) return;  // nothing reachable wants a gradient

    // Collect reachable nodes, then replay in reverse insertion order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (detail::Node* n : order) {
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

}  // namespace mdsvm
