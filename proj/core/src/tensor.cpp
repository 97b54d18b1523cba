#include "givt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "givt/rng.hpp"

namespace givt {

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

std::size_t numel(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
{
    if (numel(shape) != data.size()) {
        throw Error(ErrorCode::shape_mismatch,
                    "tensor shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) + " values");
    }
    node_ = std::make_shared<Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad)
{
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad)
{
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad)
{
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, T stddev, Rng& rng, bool requires_grad)
{
    std::vector<T> data(numel(shape));
    for (T& x : data) {
        x = static_cast<T>(rng.normal()) * stddev;
    }
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const
{
    if (!node_) {
        throw Error(ErrorCode::invalid_argument, "undefined tensor");
    }
    return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const
{
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw Error(ErrorCode::shape_mismatch, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

template <typename T>
std::size_t Tensor<T>::size() const
{
    return node_ ? node_->value.size() : 0;
}

template <typename T>
std::span<const T> Tensor<T>::data() const
{
    return node_ ? std::span<const T>(node_->value) : std::span<const T>();
}

template <typename T>
std::span<T> Tensor<T>::mutable_data()
{
    return node_ ? std::span<T>(node_->value) : std::span<T>();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const
{
    return node_ ? std::span<const T>(node_->grad) : std::span<const T>();
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad()
{
    return std::span<T>(node_->ensure_grad());
}

template <typename T>
bool Tensor<T>::has_grad() const
{
    return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty();
}

template <typename T>
void Tensor<T>::zero_grad()
{
    if (node_) {
        std::fill(node_->grad.begin(), node_->grad.end(), T{0});
    }
}

template <typename T>
bool Tensor<T>::requires_grad() const
{
    return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag)
{
    node_->requires_grad = flag;
}

template <typename T>
T Tensor<T>::item() const
{
    if (size() != 1) {
        throw Error(ErrorCode::non_scalar, "item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const
{
    return Tensor(shape(), node_->value, false);
}

template <typename T>
Tensor<T> make_op_result(std::string_view op, Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                         std::function<void(Node<T>&)> backward_fn)
{
    for (const T& x : value) {
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::non_finite, std::string(op) + " produced a non-finite value");
        }
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    const bool record =
        g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
    if (record) {
        node->requires_grad = true;
        node->backward = std::move(backward_fn);
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) {
            node->inputs.push_back(t.node());
        }
    }
    return Tensor<T>(std::move(node));
}

namespace {

template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root)
{
    // Iterative post-order DFS; every node appears exactly once.
    std::vector<Node<T>*> order;
    std::unordered_map<const Node<T>*, bool> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited[root] = true;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && !visited[child]) {
                visited[child] = true;
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace

template <typename T>
void backward(const Tensor<T>& loss)
{
    if (!loss.defined() || loss.size() != 1) {
        throw Error(ErrorCode::non_scalar, "backward() requires a scalar loss");
    }
    Node<T>* root = loss.node().get();
    if (!root->requires_grad) {
        return;
    }
    const auto order = topological_order(root);
    root->ensure_grad()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->is_leaf()) {
            continue;
        }
        if (node->grad.size() == node->value.size()) {
            node->backward(*node);
        }
        // Intermediate gradients are consumed; a second backward() over the
        // same graph contributes afresh instead of double counting.
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

template <typename T>
Graph trace(const Tensor<T>& root)
{
    Graph graph;
    if (!root.defined()) {
        return graph;
    }
    // Include non-recording inputs too so the trace reflects the whole expression.
    std::vector<Node<T>*> order;
    std::unordered_map<const Node<T>*, std::size_t> ids;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    std::unordered_map<const Node<T>*, bool> seen;
    seen[root.node().get()] = true;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (!seen[child]) {
                seen[child] = true;
                stack.emplace_back(child, 0);
            }
        } else {
            ids[node] = order.size();
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node<T>* node : order) {
        OpRecord rec;
        rec.op = std::string(node->op);
        rec.output = ids[node];
        for (const auto& in : node->inputs) {
            rec.inputs.push_back(ids[in.get()]);
        }
        graph.records.push_back(std::move(rec));
    }
    return graph;
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Graph trace<float>(const Tensor<float>&);
template Graph trace<double>(const Tensor<double>&);
template Tensor<float> make_op_result<float>(std::string_view, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                             std::function<void(Node<float>&)>);
template Tensor<double> make_op_result<double>(std::string_view, Shape, std::vector<double>,
                                               std::vector<Tensor<double>>, std::function<void(Node<double>&)>);

} // namespace givt
