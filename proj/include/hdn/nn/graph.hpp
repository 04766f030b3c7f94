#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "hdn/core/tensor.hpp"

namespace hdn::nn {

// Reverse-mode tape. Nodes are created in topological order (monotone ids),
// so backward() is a single descending-id sweep over the reachable set.

template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad; // allocated lazily in backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop; // accumulate this->grad into parents
    std::uint64_t id = 0;
};

inline std::uint64_t& node_counter() {
    thread_local std::uint64_t c = 0;
    return c;
}

inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}

// Scoped "no autodiff" switch for inference paths.
struct NoGradGuard {
    NoGradGuard() : prev(grad_enabled_flag()) { grad_enabled_flag() = false; }
    ~NoGradGuard() { grad_enabled_flag() = prev; }
    bool prev;
};

template <typename T>
class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Var constant(Tensor<T> t) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(t);
        n->id = ++node_counter();
        return Var(n);
    }

    static Var param(Tensor<T> t) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(t);
        n->requires_grad = true;
        n->id = ++node_counter();
        return Var(n);
    }

    bool defined() const { return node_ != nullptr; }
    Tensor<T>& value() { return node_->val; }
    const Tensor<T>& value() const { return node_->val; }
    Tensor<T>& grad() { return node_->grad; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return node_; }

    T scalar() const { return node_->val.v.at(0); }

  private:
    std::shared_ptr<Node<T>> node_;
};

// Builds a result node wired to its parents. When grads are globally off or
// no parent needs them, the node degrades to a constant and `make_backprop`
// is never invoked.
template <typename T, typename MakeBackprop>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, MakeBackprop&& make_backprop) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(value);
    n->id = ++node_counter();
    bool track = grad_enabled_flag();
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || p.requires_grad();
        track = any;
    }
    if (track) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backprop = make_backprop();
    }
    return Var<T>(n);
}

template <typename T>
inline void ensure_grad(Node<T>& n) {
    if (n.grad.shape != n.val.shape) {
        n.grad = Tensor<T>(n.val.shape);
    }
}

// Backpropagate d(loss)/d(everything reachable). Seeds the loss grad with 1.
template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.requires_grad()) return;
    std::vector<std::shared_ptr<Node<T>>> order;
    std::unordered_set<const Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{loss.node()};
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || seen.count(n.get())) continue;
        seen.insert(n.get());
        order.push_back(n);
        for (auto& p : n->parents) stack.push_back(p);
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });
    for (auto& n : order) ensure_grad(*n), n->grad.zero();
    Node<T>& root = *loss.node();
    root.grad.fill(T(1));
    for (auto& n : order) {
        if (n->backprop) n->backprop(*n);
    }
}

} // namespace hdn::nn
