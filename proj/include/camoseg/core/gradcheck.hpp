// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "camoseg/core/autodiff.hpp"
#include "camoseg/core/tensor.hpp"

namespace camoseg {

struct GradReport {
    std::string op;
    double max_rel_err = 0.0;
    std::vector<double> per_input;   // worst relative error per input tensor
    std::size_t worst_input = 0;

    bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Builds a scalar Var from leaf inputs. Must be pure and deterministic.
using ScalarFn = std::function<Var(const std::vector<Var>&)>;

// Central differences with step h against the adjoint-rule gradient.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
// Runs in checked mode; a non-finite intermediate raises numeric_error naming
// the failing op.
inline GradReport finite_diff_check(const std::string& name, const ScalarFn& f,
                                    const std::vector<Tensor>& inputs, double h = 1e-5) {
    CheckedModeGuard checked;

    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.emplace_back(t, /*requires_grad=*/true);
    Var out = f(leaves);
    if (out.value().numel() != 1)
        throw dimension_error("finite_diff_check(" + name + "): f must be scalar-valued");
    backward(out);

    auto eval = [&](const std::vector<Tensor>& xs) {
        std::vector<Var> vs;
        vs.reserve(xs.size());
        for (const Tensor& t : xs) vs.emplace_back(t, /*requires_grad=*/false);
        double v = f(vs).value().item();
        if (!std::isfinite(v)) throw numeric_error("finite_diff_check(" + name + "): non-finite value");
        return v;
    };

    GradReport report;
    report.op = name;
    report.per_input.assign(inputs.size(), 0.0);

    std::vector<Tensor> work = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const Tensor* analytic = leaves[t].has_grad() ? &leaves[t].grad() : nullptr;
        for (std::size_t e = 0; e < inputs[t].numel(); ++e) {
            double orig = work[t].data[e];
            work[t].data[e] = orig + h;
            double fp = eval(work);
            work[t].data[e] = orig - h;
            double fm = eval(work);
            work[t].data[e] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic ? analytic->data[e] : 0.0;
            // components whose analytic and numeric values agree to below the
            // central-difference noise level count as exact matches
            double diff = std::fabs(a - numeric);
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            double rel = diff <= 1e-9 ? 0.0 : diff / denom;
            if (rel > report.per_input[t]) report.per_input[t] = rel;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_input = t;
            }
        }
    }
    return report;
}

} // namespace camoseg
