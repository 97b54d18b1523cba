#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "givt/error.hpp"

namespace givt {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One vertex of the define-by-run graph. Leaves have no backward function.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad()
    {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), T{0});
        }
        return grad;
    }
    bool is_leaf() const noexcept { return !backward; }
};

/// Dense row-major array with reverse-mode differentiation.
///
/// Tensor is a cheap handle: copies share the underlying node. Operations
/// record themselves when gradient recording is enabled and at least one
/// input requires a gradient.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);
    static Tensor randn(Shape shape, T stddev, Rng& rng, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    std::span<const T> data() const;
    /// Direct write access; only meaningful for leaves (parameters, inputs).
    std::span<T> mutable_data();
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    bool has_grad() const;
    void zero_grad();

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    T item() const;

    /// Copy of the values with no graph history.
    Tensor detach() const;

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node<T>> node_;
};

/// Gradient recording is on by default; a guard disables it for the current thread.
bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Propagates d(loss)/d(leaf) into every leaf that requires a gradient.
/// Leaf gradients accumulate; call zero_grad() between steps.
template <typename T>
void backward(const Tensor<T>& loss);

struct OpRecord {
    std::string op;
    std::vector<std::size_t> inputs;
    std::size_t output = 0;
};

/// Topologically ordered view of the graph that produced a tensor.
struct Graph {
    std::vector<OpRecord> records;
};

template <typename T>
Graph trace(const Tensor<T>& root);

/// Builds an op result, validating finiteness and wiring the backward rule
/// when recording applies.
template <typename T>
Tensor<T> make_op_result(std::string_view op, Shape shape, std::vector<T> value,
                         std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward);

} // namespace givt
