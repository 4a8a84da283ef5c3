#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mdsvm/errors.hpp"

namespace mdsvm {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One record in the differentiation graph. Nodes carry a strictly increasing
// sequence id; reverse-sequence order is a valid reverse topological order
// because inputs are always created before the ops that consume them.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Consumes this->grad and accumulates into parents' grads. Null for leaves.
    std::function<void(Node&)> backward_fn;
    // Forward-pass scratch kept for backward (scan states, argmax indices).
    std::vector<double> stash;
    std::vector<std::int64_t> stash_i;

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
    void ensure_grad();
};

std::shared_ptr<Node> make_node(Shape shape, bool requires_grad);

}  // namespace detail

// Dense 64-bit real tensor participating in a reverse-mode differentiation
// graph. Value-semantic handle; the payload is immutable once an op has
// consumed it (only gradient buffers mutate during backward). Layout is
// contiguous row-major with the last extent fastest; feature maps follow the
// batch x channel x H x W x D convention.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int dim() const { return static_cast<int>(n_->shape.size()); }
    std::int64_t numel() const { return n_->numel(); }
    std::int64_t extent(int axis) const { return n_->shape[static_cast<std::size_t>(axis)]; }

    std::span<const double> values() const { return n_->value; }
    // Leaf mutation only (initialization, optimizer steps). Mutating a tensor
    // that a graph already consumed invalidates that graph.
    std::span<double> mutable_values() { return n_->value; }

    bool requires_grad() const { return n_->requires_grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    double item() const;
    double at(std::initializer_list<std::int64_t> idx) const;

    bool all_finite() const;

    const std::shared_ptr<detail::Node>& node() const { return n_; }

private:
    std::shared_ptr<detail::Node> n_;
};

// Reverse sweep from a scalar loss: seeds d(loss)/d(loss)=1 and visits every
// reachable op node exactly once in reverse insertion order, accumulating
// gradients additively across fan-out.
void backward(const Tensor& loss);

}  // namespace mdsvm
