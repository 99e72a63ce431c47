// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Var wraps a graph node holding a value, a lazily allocated gradient, and
// a backward closure that scatters the node's gradient into its parents.
// Graphs are rebuilt every step; parameters are long-lived leaf Vars whose
// values the optimizer mutates in place.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "aptx/tensor.hpp"

namespace aptx {

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

// RAII guard disabling graph recording (forward evaluation only).
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor<T>& g) {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        T* dst = grad.data();
        const T* src = g.data();
        const std::int64_t n = grad.numel();
        for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    std::int64_t numel() const { return node_->value.numel(); }

    std::shared_ptr<Node<T>> node() const { return node_; }

    Var detach() const { return Var(node_->value, false); }

    void zero_grad() { node_->grad = Tensor<T>(); }

    // Backpropagate from this scalar node through the recorded graph.
    void backward() {
        if (numel() != 1) throw ShapeError("backward() requires a scalar node");
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        topo(node_.get(), seen, order);
        node_->grad = Tensor<T>(node_->value.shape(), T(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

private:
    static void topo(Node<T>* n, std::unordered_set<Node<T>*>& seen, std::vector<Node<T>*>& order) {
        // Iterative DFS; graphs can be a few thousand nodes deep.
        struct Frame {
            Node<T>* node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack{{n, 0}};
        seen.insert(n);
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node<T>* p = f.node->parents[f.next_parent++].get();
                if (p && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node<T>> node_;
};

// Create an op node. If grad recording is off or no parent needs gradients,
// the result is a detached leaf and `backward` is dropped.
template <class T, class Backward>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, Backward backward) {
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p.requires_grad()) needs = true;
    Var<T> out(std::move(value), needs);
    if (needs) {
        auto node = out.node();
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward);
    }
    return out;
}

}  // namespace aptx
