// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <iostream>
#include <optional>

#include "camoseg/core/ops.hpp"

namespace camoseg {

struct LossWeights {
    double bce = 1.0;
    double dice = 0.5;
    double ual = 0.0;
    double q = 0.5;

    static LossWeights zeroshot() { return {1.0, 0.5, 0.0, 0.5}; }
    static LossWeights supervised() { return {1.0, 0.5, 1.0, 0.5}; }

    void validate() const {
        if (bce < 0 || dice < 0 || ual < 0 || q < 0)
            throw config_error("loss weights must be nonnegative");
    }
};

struct LossBreakdown {
    double bce = 0, dice = 0, ual = 0, q = 0, total = 0;
};

struct TotalLoss {
    Var total;
    LossBreakdown parts;
};

namespace losses {

constexpr double kProbClamp = 1e-7;
constexpr double kDiceEps = 1.0;

// mean of -[g ln p + (1-g) ln(1-p)], probabilities clamped away from {0,1}.
inline Var bce(const Var& p, const Var& g) {
    ops::detail::require_same_shape(p.value(), g.value(), "bce");
    Var pc = ops::clamp(p, kProbClamp, 1.0 - kProbClamp);
    Var pos = ops::mul(g, ops::log(pc));
    Var one_minus_g = ops::add_scalar(ops::mul_scalar(g, -1.0), 1.0);
    Var one_minus_p = ops::add_scalar(ops::mul_scalar(pc, -1.0), 1.0);
    Var neg = ops::mul(one_minus_g, ops::log(one_minus_p));
    return ops::mul_scalar(ops::mean(ops::add(pos, neg)), -1.0);
}

inline Var bce(const Var& p, const Tensor& g) { return bce(p, Var(g, false)); }

// 1 - (2 sum(pg) + eps) / (sum(p) + sum(g) + eps)
inline Var dice(const Var& p, const Var& g) {
    ops::detail::require_same_shape(p.value(), g.value(), "dice");
    Var inter = ops::add_scalar(ops::mul_scalar(ops::sum(ops::mul(p, g)), 2.0), kDiceEps);
    Var denom = ops::add_scalar(ops::add(ops::sum(p), ops::sum(g)), kDiceEps);
    return ops::add_scalar(ops::mul_scalar(ops::div(inter, denom), -1.0), 1.0);
}

inline Var dice(const Var& p, const Tensor& g) { return dice(p, Var(g, false)); }

// mean of 1 - (2p - 1)^2: maximal at p = 0.5, zero at p in {0, 1}.
inline Var ual(const Var& p) {
    Var centered = ops::add_scalar(ops::mul_scalar(p, 2.0), -1.0);
    Var sq = ops::mul(centered, centered);
    return ops::mean(ops::add_scalar(ops::mul_scalar(sq, -1.0), 1.0));
}

// 1 - mean over scales of the Frobenius cosine between grouped caption and
// grouped query tokens. Gradients flow into both sides: the query chases the
// caption-grouped tokens while the shared mixer is pulled to compress
// caption-specific components, which is what lets the codebook stand in for
// the captions at inference. A zero-norm operand contributes cosine 0 with a
// warning.
inline Var query_loss(const std::array<Var, 4>& I, const std::array<Var, 4>& Q) {
    Var acc = Var(Tensor::scalar(0.0), false);
    for (std::size_t i = 0; i < 4; ++i) {
        ops::detail::require_same_shape(I[i].value(), Q[i].value(), "query_loss");
        double i_norm = 0.0, q_norm = 0.0;
        for (double v : I[i].value().data) i_norm += v * v;
        for (double v : Q[i].value().data) q_norm += v * v;
        if (i_norm == 0.0 || q_norm == 0.0) {
            std::cerr << "warning: query_loss scale " << i
                      << " has a zero-norm operand; cosine taken as 0\n";
            continue;
        }
        Var num = ops::dot(I[i], Q[i]);
        Var den = ops::mul(ops::sqrt(ops::dot(I[i], I[i])), ops::sqrt(ops::dot(Q[i], Q[i])));
        acc = ops::add(acc, ops::div(num, den));
    }
    return ops::add_scalar(ops::mul_scalar(acc, -1.0 / 4.0), 1.0);
}

inline TotalLoss total_loss(const Var& p, const Tensor& g,
                            const std::optional<std::array<Var, 4>>& I,
                            const std::optional<std::array<Var, 4>>& Q, const LossWeights& w) {
    w.validate();
    Var l_bce = bce(p, g);
    Var l_dice = dice(p, g);
    Var l_ual = ual(p);
    Var total = ops::add(ops::mul_scalar(l_bce, w.bce), ops::mul_scalar(l_dice, w.dice));
    total = ops::add(total, ops::mul_scalar(l_ual, w.ual));
    TotalLoss out{Var(), {}};
    out.parts.bce = l_bce.value().item();
    out.parts.dice = l_dice.value().item();
    out.parts.ual = l_ual.value().item();
    if (I && Q) {
        Var l_q = query_loss(*I, *Q);
        out.parts.q = l_q.value().item();
        total = ops::add(total, ops::mul_scalar(l_q, w.q));
    }
    out.total = total;
    out.parts.total = total.value().item();
    return out;
}

} // namespace losses
} // namespace camoseg
