#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lmlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;  // set on the loss node once backward has run
    const char* op = "leaf";

    // Graph edges; populated only for non-leaf nodes built with grad enabled.
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node& self)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

// Dense row-major float64 array with reverse-mode gradient tracking.
//
// Tensor is a cheap handle; copies share storage. Ops build a
// define-by-run graph that is released by backward().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Mutating a tensor that is part of a live graph invalidates its backward.
    std::span<double> mutable_data();

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    double item() const;
    double at(std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const;

    // Fresh leaf sharing no storage or history with this tensor.
    Tensor detach() const;
    Tensor clone(bool requires_grad = false) const;

    const char* op_name() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Builds the output node of an op. Records parents and the backward rule
// only when recording is on and at least one input requires grad. Throws
// NonFiniteError if `values` holds NaN/Inf.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::Node& self)> backward);

// Nodes reachable from `root` through recorded edges, in topological order
// (inputs before outputs).
std::vector<const detail::Node*> topological_order(const Tensor& root);

// Populates grads of every requires_grad node reachable from `loss`. The
// graph is released afterwards; a second call on the same loss throws.
// When `visit_order` is non-null it receives the nodes in the order their
// backward rules ran.
void backward(const Tensor& loss, std::vector<const detail::Node*>* visit_order = nullptr);

}  // namespace lmlab
