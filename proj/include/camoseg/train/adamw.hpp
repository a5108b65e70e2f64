// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <unordered_map>

#include "camoseg/model/params.hpp"

namespace camoseg {

// Adaptive moments with decoupled weight decay. Only trainable parameters
// carry state or receive updates.
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;

    struct Moments {
        Tensor m, v;
    };

    explicit AdamW(ParamStore& store) : store_(&store) {
        for (const auto& p : store.all())
            if (p->trainable)
                moments_[p.get()] = {Tensor::zeros(p->tensor.shape), Tensor::zeros(p->tensor.shape)};
    }

    // biases, norm gains and the adapter scales are exempt from decay
    static bool decays(const Parameter& p) {
        return p.tensor.rank() >= 2;
    }

    // per-group learning-rate scaling by parameter name prefix
    void set_lr_scale(const std::string& prefix, double scale) {
        for (const auto& p : store_->all())
            if (p->trainable && p->name.rfind(prefix, 0) == 0) lr_scale_[p.get()] = scale;
    }

    std::size_t step_count() const { return t_; }

    // Consumes the accumulated gradients and zeroes them.
    void step(double lr_base) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (const auto& p : store_->all()) {
            if (!p->trainable) continue;
            Moments& mo = moments_[p.get()];
            double wd = decays(*p) ? weight_decay : 0.0;
            double lr = lr_base;
            if (auto it = lr_scale_.find(p.get()); it != lr_scale_.end()) lr *= it->second;
            for (std::size_t i = 0; i < p->tensor.data.size(); ++i) {
                double g = p->grad.data[i];
                mo.m.data[i] = beta1 * mo.m.data[i] + (1.0 - beta1) * g;
                mo.v.data[i] = beta2 * mo.v.data[i] + (1.0 - beta2) * g * g;
                double mhat = mo.m.data[i] / bc1;
                double vhat = mo.v.data[i] / bc2;
                p->tensor.data[i] -=
                    lr * (mhat / (std::sqrt(vhat) + eps) + wd * p->tensor.data[i]);
            }
            p->zero_grad();
        }
    }

    Moments* moments_of(Parameter* p) {
        auto it = moments_.find(p);
        return it == moments_.end() ? nullptr : &it->second;
    }

    void set_step_count(std::size_t t) { t_ = t; }

private:
    ParamStore* store_;
    std::unordered_map<Parameter*, Moments> moments_;
    std::unordered_map<Parameter*, double> lr_scale_;
    std::size_t t_ = 0;
};

} // namespace camoseg
