#include "lmlab/numerics/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "lmlab/common/error.hpp"

namespace lmlab {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= node_->shape.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(node_->shape));
    }
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (node_->grad.empty()) throw GraphError("tensor has no gradient");
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    if (rank() != 2) throw ShapeError("at(r, c) needs a matrix");
    return node_->data[r * node_->shape[1] + c];
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
    return from(node_->shape, node_->data, requires_grad);
}

const char* Tensor::op_name() const { return node_->op; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::Node& self)> backward_rule) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string("non-finite value produced by ") + op);
        }
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    node->is_leaf = false;
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& t : inputs) node->parents.push_back(t.node_ptr());
        node->backward = std::move(backward_rule);
    }
    return Tensor(std::move(node));
}

std::vector<const detail::Node*> topological_order(const Tensor& root) {
    std::vector<const detail::Node*> order;
    std::unordered_set<const detail::Node*> seen;
    // Iterative post-order DFS: (node, next parent index).
    std::vector<std::pair<const detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            const detail::Node* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void backward(const Tensor& loss, std::vector<const detail::Node*>* visit_order) {
    if (!loss.defined()) throw GraphError("backward on undefined tensor");
    if (loss.numel() != 1) {
        throw GraphError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) throw GraphError("backward on a detached graph");
    if (loss.node()->consumed) throw GraphError("backward called twice on the same graph");

    auto order = topological_order(loss);
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const detail::Node* n = *it;
        if (visit_order) visit_order->push_back(n);
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    loss.node()->consumed = true;
}

}  // namespace lmlab
