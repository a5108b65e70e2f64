// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "camoseg/core/tensor.hpp"

namespace camoseg {

// Reverse-mode tape over the fixed primitive set in ops.hpp. A Var is a handle
// to a graph node; graphs are DAGs of shared_ptr nodes and are freed when the
// last handle goes out of scope.
class Var {
public:
    struct Node {
        Tensor value;
        Tensor grad;              // allocated on first accumulation
        bool requires_grad = false;
        const char* op = "leaf";
        std::vector<std::shared_ptr<Node>> parents;
        // Reads this node's grad, accumulates into the parents' grads.
        std::function<void(Node&)> backprop;

        Tensor& ensure_grad() {
            if (grad.numel() == 0) grad = Tensor::zeros(value.shape);
            return grad;
        }
    };

    Var() = default;

    explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var make(Tensor value, const char* op, std::vector<Var> parents,
                    std::function<void(Node&)> backprop) {
        if (checked_mode()) value.require_finite(op);
        Var out;
        out.node_ = std::make_shared<Node>();
        out.node_->value = std::move(value);
        out.node_->op = op;
        bool rg = false;
        out.node_->parents.reserve(parents.size());
        for (Var& p : parents) {
            rg = rg || p.node_->requires_grad;
            out.node_->parents.push_back(p.node_);
        }
        out.node_->requires_grad = rg;
        if (rg) out.node_->backprop = std::move(backprop);
        return out;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.numel() > 0; }
    bool requires_grad() const { return node_->requires_grad; }
    const char* op() const { return node_->op; }
    Node* node() const { return node_.get(); }
    std::shared_ptr<Node> handle() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Runs reverse accumulation from a scalar root. Seeds d(root)/d(root) = 1 and
// visits nodes in reverse topological order, iteratively (no recursion).
inline void backward(const Var& root) {
    if (!root.defined()) throw dimension_error("backward: undefined root");
    if (root.value().numel() != 1)
        throw dimension_error("backward: root must be scalar, got " + shape_str(root.value().shape));
    if (!root.requires_grad()) return;

    std::vector<Var::Node*> order;
    std::unordered_set<Var::Node*> seen;
    std::vector<std::pair<Var::Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Var::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var::Node* n = *it;
        if (n->backprop && n->grad.numel() > 0) n->backprop(*n);
    }
}

} // namespace camoseg
