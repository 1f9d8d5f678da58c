#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pzsl/array.hpp"

namespace pzsl {

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
    Array<T> value;
    Array<T> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    void accumulate(const Array<T>& g) {
        if (!requires_grad) {
            return;
        }
        if (grad.empty()) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

} // namespace detail

/// Node in a reverse-mode differentiation graph. Copies share the node.
template <class T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() : node_(std::make_shared<Node>()) {}

    static Tensor constant(Array<T> value) {
        Tensor t;
        t.node_->value = std::move(value);
        return t;
    }

    /// Trainable leaf.
    static Tensor parameter(Array<T> value) {
        Tensor t = constant(std::move(value));
        t.node_->requires_grad = true;
        return t;
    }

    /// Result of an op; records the parents and the backward rule when any input needs a gradient.
    static Tensor from_op(const char* op, Array<T> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
        if (!value.all_finite()) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
        Tensor t = constant(std::move(value));
        t.node_->op = op;
        for (const auto& in : inputs) {
            t.node_->requires_grad = t.node_->requires_grad || in.requires_grad();
        }
        if (t.node_->requires_grad) {
            for (auto& in : inputs) {
                t.node_->parents.push_back(in.node_);
            }
            t.node_->backward = std::move(backward);
        }
        return t;
    }

    const Array<T>& value() const noexcept { return node_->value; }
    /// Direct access for in-place parameter updates; never use on graph intermediates.
    Array<T>& mutable_value() noexcept { return node_->value; }
    const Shape& shape() const noexcept { return node_->value.shape(); }
    std::size_t rows() const noexcept { return node_->value.rows(); }
    std::size_t cols() const noexcept { return node_->value.cols(); }
    T item() const { return node_->value[0]; }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool has_grad() const noexcept { return !node_->grad.empty(); }
    const Array<T>& grad() const noexcept { return node_->grad; }
    void zero_grad() { node_->grad = Array<T>(); }

    Node& node() const noexcept { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

    /// Backpropagates from this tensor, seeding its gradient with ones.
    void backward() const {
        if (!node_->requires_grad) {
            return;
        }
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        // Iterative post-order DFS.
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (p->requires_grad && visited.insert(p).second) {
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->accumulate(Array<T>(node_->value.shape(), T{1}));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward && !n->grad.empty()) {
                n->backward(*n);
            }
        }
    }

private:
    std::shared_ptr<Node> node_;
};

} // namespace pzsl
