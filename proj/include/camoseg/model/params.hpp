// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "camoseg/core/autodiff.hpp"
#include "camoseg/core/error.hpp"
#include "camoseg/core/rng.hpp"
#include "camoseg/core/tensor.hpp"

namespace camoseg {

// Named model weight. trainable=false entries never receive updates.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
    Tensor grad; // accumulated across a batch, consumed by the optimizer

    void zero_grad() { grad = Tensor::zeros(tensor.shape); }
};

// Owns all parameters of a model; names are unique paths.
class ParamStore {
public:
    Parameter& add(std::string name, Tensor init, bool trainable) {
        if (index_.count(name)) throw config_error("duplicate parameter name '" + name + "'");
        auto p = std::make_unique<Parameter>();
        p->name = std::move(name);
        p->tensor = std::move(init);
        p->trainable = trainable;
        p->grad = Tensor::zeros(p->tensor.shape);
        Parameter& ref = *p;
        index_[ref.name] = p.get();
        list_.push_back(std::move(p));
        return ref;
    }

    Parameter* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : it->second;
    }

    const std::vector<std::unique_ptr<Parameter>>& all() const { return list_; }

    std::size_t count_matching(const std::string& prefix, bool* any_trainable = nullptr) const {
        std::size_t n = 0;
        for (const auto& p : list_)
            if (p->name.rfind(prefix, 0) == 0) {
                n += p->tensor.numel();
                if (any_trainable && p->trainable) *any_trainable = true;
            }
        return n;
    }

    void zero_grads() {
        for (auto& p : list_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter>> list_;
    std::unordered_map<std::string, Parameter*> index_;
};

// Per-forward tape context. Each parameter gets exactly one leaf node per
// forward pass, so shared modules accumulate gradients into the same node.
class Workspace {
public:
    Var use(Parameter& p) {
        auto it = leaves_.find(&p);
        if (it != leaves_.end()) return it->second;
        Var leaf(p.tensor, /*requires_grad=*/p.trainable);
        leaves_.emplace(&p, leaf);
        return leaf;
    }

    // Substitute an externally owned leaf for a parameter (gradient checking).
    void bind(Parameter& p, const Var& v) {
        if (!v.value().same_shape(p.tensor))
            throw dimension_error("bind: leaf " + shape_str(v.value().shape) +
                                  " vs parameter " + shape_str(p.tensor.shape));
        leaves_.insert_or_assign(&p, v);
    }

    // Adds scale * d(loss)/d(param) into each parameter's grad buffer.
    void accumulate_grads(double scale = 1.0) {
        for (auto& [p, leaf] : leaves_) {
            if (!p->trainable || !leaf.has_grad()) continue;
            const Tensor& g = leaf.grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += scale * g.data[i];
        }
    }

private:
    std::unordered_map<Parameter*, Var> leaves_;
};

// Gaussian init helpers used across modules.
inline Tensor gaussian_init(const Shape& s, Rng& rng, double sigma) {
    return Tensor::randn(s, rng, sigma);
}

// gain 2 compensates the halving a gelu applies to small-signal inputs
inline Tensor xavier_init(const Shape& s, Rng& rng, double gain = 1.0) {
    double fan_in = static_cast<double>(s.size() == 2 ? s[0] : s[0]);
    double fan_out = static_cast<double>(s.size() == 2 ? s[1] : s[0]);
    double sigma = gain * std::sqrt(2.0 / (fan_in + fan_out));
    return Tensor::randn(s, rng, sigma);
}

// Independent init stream per parameter path so initialization does not
// depend on registration order.
inline Rng param_rng(std::uint64_t seed, const std::string& name) {
    return Rng(hash_str(seed, name));
}

} // namespace camoseg
