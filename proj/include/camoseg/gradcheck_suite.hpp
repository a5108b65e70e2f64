// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "camoseg/core/gradcheck.hpp"
#include "camoseg/core/ops.hpp"
#include "camoseg/model/losses.hpp"
#include "camoseg/model/network.hpp"

namespace camoseg {

// Full derivative verification: every primitive plus the five composites
// (adapter block, mixer, token matching, decoder, losses), repeated over a
// set of seeds, in 64-bit arithmetic.
namespace gradsuite {

inline Tensor rand_t(Shape s, Rng& rng, double scale = 1.0) {
    return Tensor::randn(std::move(s), rng, scale);
}

// Values pushed away from |x| < margin so kinked ops (relu, threshold) are
// differentiable at every sample point.
inline Tensor rand_away_from(Shape s, Rng& rng, double center, double margin) {
    Tensor t = Tensor::randn(std::move(s), rng, 1.0);
    for (double& v : t.data) {
        double d = v - center;
        if (std::fabs(d) < margin) v = center + (d >= 0 ? margin : -margin) * 2.0;
    }
    return t;
}

inline Tensor rand_uniform(Shape s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Weighted sum against a fixed random tensor turns any output into a
// well-conditioned scalar.
inline Var probe(const Var& out, const Tensor& weights) {
    return ops::sum(ops::mul(out, Var(weights, false)));
}

inline std::vector<Parameter*> params_with_prefix(ParamStore& store, const std::string& prefix) {
    std::vector<Parameter*> out;
    for (const auto& p : store.all())
        if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    return out;
}

// f(input tensors..., parameter tensors...) with the parameters bound into
// the workspace, so the check differentiates with respect to both.
template <typename Fwd>
inline GradReport check_module(const std::string& name, ParamStore& store,
                               const std::vector<Parameter*>& params,
                               std::vector<Tensor> data_inputs, Fwd&& fwd, double h = 1e-5) {
    std::size_t n_data = data_inputs.size();
    for (Parameter* p : params) data_inputs.push_back(p->tensor);
    ScalarFn fn = [&, n_data](const std::vector<Var>& leaves) -> Var {
        Workspace ws;
        for (std::size_t i = 0; i < params.size(); ++i) ws.bind(*params[i], leaves[n_data + i]);
        return fwd(ws, leaves);
    };
    return finite_diff_check(name, fn, data_inputs, h);
}

inline std::vector<GradReport> run_primitive_checks(std::uint64_t seed) {
    std::vector<GradReport> out;
    Rng rng(hash_combine(seed, 0x9121));
    auto wt = [&](Shape s) { return rand_t(std::move(s), rng, 0.7); };

    {
        Tensor w = wt({3, 2});
        out.push_back(finite_diff_check("matmul", [&](const std::vector<Var>& v) {
            return probe(ops::matmul(v[0], v[1]), w);
        }, {wt({3, 4}), wt({4, 2})}));
    }
    {
        Tensor w = wt({3, 2});
        out.push_back(finite_diff_check("linear", [&](const std::vector<Var>& v) {
            return probe(ops::linear(v[0], v[1], v[2]), w);
        }, {wt({3, 4}), wt({4, 2}), wt({2})}));
    }
    {
        Tensor w = wt({3, 4});
        out.push_back(finite_diff_check("row_add", [&](const std::vector<Var>& v) {
            return probe(ops::row_add(v[0], v[1]), w);
        }, {wt({3, 4}), wt({4})}));
    }
    {
        Tensor w = wt({3, 5});
        out.push_back(finite_diff_check("softmax_rows", [&](const std::vector<Var>& v) {
            return probe(ops::softmax_rows(v[0]), w);
        }, {wt({3, 5})}));
        out.push_back(finite_diff_check("minmax_rows", [&](const std::vector<Var>& v) {
            return probe(ops::minmax_rows(v[0]), w);
        }, {wt({3, 5})}));
    }
    {
        Tensor w = wt({4, 3});
        out.push_back(finite_diff_check("layer_norm", [&](const std::vector<Var>& v) {
            return probe(ops::layer_norm(v[0], v[1], v[2]), w);
        }, {wt({4, 3}), wt({3}), wt({3})}));
    }
    {
        Tensor w = wt({3, 4});
        out.push_back(finite_diff_check("relu", [&](const std::vector<Var>& v) {
            return probe(ops::relu(v[0]), w);
        }, {rand_away_from({3, 4}, rng, 0.0, 1e-3)}));
        out.push_back(finite_diff_check("sigmoid", [&](const std::vector<Var>& v) {
            return probe(ops::sigmoid(v[0]), w);
        }, {wt({3, 4})}));
        out.push_back(finite_diff_check("gelu", [&](const std::vector<Var>& v) {
            return probe(ops::gelu(v[0]), w);
        }, {wt({3, 4})}));
    }
    {
        Tensor w = wt({5, 6, 2});
        out.push_back(finite_diff_check("resize_bilinear", [&](const std::vector<Var>& v) {
            return probe(ops::resize_bilinear(v[0], 5, 6), w);
        }, {wt({3, 4, 2})}));
    }
    {
        Tensor w = wt({4, 3});
        out.push_back(finite_diff_check("transpose", [&](const std::vector<Var>& v) {
            return probe(ops::transpose(v[0]), w);
        }, {wt({3, 4})}));
    }
    {
        Tensor w = wt({3, 2});
        out.push_back(finite_diff_check("slice_cols", [&](const std::vector<Var>& v) {
            return probe(ops::slice_cols(v[0], 1, 2), w);
        }, {wt({3, 5})}));
    }
    {
        Tensor w = wt({3, 5});
        out.push_back(finite_diff_check("concat_cols", [&](const std::vector<Var>& v) {
            return probe(ops::concat_cols({v[0], v[1]}), w);
        }, {wt({3, 2}), wt({3, 3})}));
    }
    {
        Tensor w = wt({3, 4});
        out.push_back(finite_diff_check("threshold_keep", [&](const std::vector<Var>& v) {
            return probe(ops::threshold_keep(v[0], 0.25), w);
        }, {rand_away_from({3, 4}, rng, 0.25, 1e-3)}));
        out.push_back(finite_diff_check("scale_by", [&](const std::vector<Var>& v) {
            return probe(ops::scale_by(v[0], v[1]), w);
        }, {wt({1}), wt({3, 4})}));
        out.push_back(finite_diff_check("add", [&](const std::vector<Var>& v) {
            return probe(ops::add(v[0], v[1]), w);
        }, {wt({3, 4}), wt({3, 4})}));
        out.push_back(finite_diff_check("sub", [&](const std::vector<Var>& v) {
            return probe(ops::sub(v[0], v[1]), w);
        }, {wt({3, 4}), wt({3, 4})}));
        out.push_back(finite_diff_check("mul", [&](const std::vector<Var>& v) {
            return probe(ops::mul(v[0], v[1]), w);
        }, {wt({3, 4}), wt({3, 4})}));
    }
    {
        out.push_back(finite_diff_check("sum", [&](const std::vector<Var>& v) {
            return ops::sum(v[0]);
        }, {wt({3, 4})}));
        out.push_back(finite_diff_check("mean", [&](const std::vector<Var>& v) {
            return ops::mean(v[0]);
        }, {wt({3, 4})}));
        out.push_back(finite_diff_check("dot", [&](const std::vector<Var>& v) {
            return ops::dot(v[0], v[1]);
        }, {wt({3, 4}), wt({3, 4})}));
        out.push_back(finite_diff_check("div", [&](const std::vector<Var>& v) {
            return ops::mean(ops::div(v[0], v[1]));
        }, {wt({3, 3}), rand_away_from({3, 3}, rng, 0.0, 0.4)}));
        out.push_back(finite_diff_check("log", [&](const std::vector<Var>& v) {
            return ops::mean(ops::log(v[0]));
        }, {rand_uniform({3, 3}, rng, 0.2, 2.0)}));
        out.push_back(finite_diff_check("sqrt", [&](const std::vector<Var>& v) {
            return ops::mean(ops::sqrt(v[0]));
        }, {rand_uniform({3, 3}, rng, 0.2, 2.0)}));
        Tensor clamp_in = rand_uniform({3, 4}, rng, -1.5, 1.5);
        for (double& v : clamp_in.data)
            if (std::fabs(std::fabs(v) - 0.8) < 1e-3) v += 0.01;
        out.push_back(finite_diff_check("clamp", [&](const std::vector<Var>& v) {
            return ops::mean(ops::clamp(v[0], -0.8, 0.8));
        }, {clamp_in}));
        out.push_back(finite_diff_check("reshape", [&](const std::vector<Var>& v) {
            return ops::sum(ops::reshape(v[0], {4, 3}));
        }, {wt({3, 4})}));
    }
    return out;
}

inline std::vector<GradReport> run_composite_checks(std::uint64_t seed) {
    std::vector<GradReport> out;
    Rng rng(hash_combine(seed, 0xc0de));

    EncoderConfig ecfg;
    ecfg.image_size = 32;
    ecfg.patch_size = 8;
    ecfg.depth = 1;
    ecfg.d_v = 8;
    ecfg.heads = 2;
    ecfg.d_lr = 4;
    ecfg.mlp_ratio = 2;
    MfaConfig mcfg;
    mcfg.L_t = 4;
    mcfg.d_t = 6;
    mcfg.d = 4;
    Network net(ecfg, mcfg, hash_combine(seed, 77));
    ParamStore& store = net.store();

    std::size_t tokens = ecfg.tokens();

    { // full adapted transformer block, inputs + every block/adapter weight
        auto params = params_with_prefix(store, "encoder.block0.");
        auto aparams = params_with_prefix(store, "encoder.adapter0.");
        params.insert(params.end(), aparams.begin(), aparams.end());
        // nonzero adapter scale so that branch contributes
        store.find("encoder.adapter0.scale")->tensor.data[0] = 0.7;
        Tensor w = rand_t({tokens, ecfg.d_v}, rng, 0.5);
        out.push_back(check_module("adapter_block", store, params,
                                   {rand_t({tokens, ecfg.d_v}, rng, 0.5)},
                                   [&](Workspace& ws, const std::vector<Var>& v) {
                                       Var y = net.encoder().adapted_block_forward(
                                           ws, v[0], net.encoder().blocks()[0],
                                           net.encoder().adapters()[0]);
                                       return probe(y, w);
                                   }));
    }
    { // text mixer
        auto params = params_with_prefix(store, "mfa.mixer.");
        Tensor w = rand_t({mcfg.L_t / 2, mcfg.d}, rng, 0.5);
        out.push_back(check_module("mixer", store, params,
                                   {rand_t({mcfg.L_t, mcfg.d_t}, rng, 0.5)},
                                   [&](Workspace& ws, const std::vector<Var>& v) {
                                       return probe(net.mfa().mix(ws, v[0]), w);
                                   }));
    }
    { // token matching (parameter-free)
        Tensor w = rand_t({5, 3}, rng, 0.5);
        out.push_back(finite_diff_check("token_match", [&](const std::vector<Var>& v) {
            return probe(Mfa::token_match(v[0], v[1]), w);
        }, {rand_t({5, 3}, rng, 0.8), rand_t({3, 3}, rng, 0.8)}));
    }
    { // decoder over all scales, inputs + all nine layers
        auto params = params_with_prefix(store, "decoder.");
        std::vector<Tensor> inputs;
        for (std::size_t s : kPyramidStrides) {
            std::size_t g = ecfg.image_size / s;
            inputs.push_back(rand_t({g * g, ecfg.d_v}, rng, 0.5));
        }
        for (std::size_t s : kPyramidStrides) {
            std::size_t g = ecfg.image_size / s;
            inputs.push_back(rand_t({g * g, mcfg.d}, rng, 0.5));
        }
        Tensor w = rand_t({ecfg.image_size, ecfg.image_size}, rng, 0.3);
        out.push_back(check_module("decoder", store, params, inputs,
                                   [&](Workspace& ws, const std::vector<Var>& v) {
                                       MultiScaleFeatures feats;
                                       std::array<Var, 4> grouped;
                                       for (std::size_t i = 0; i < 4; ++i) {
                                           feats.feats[i] = v[i];
                                           grouped[i] = v[4 + i];
                                       }
                                       return probe(net.decoder().decode(ws, feats, grouped), w);
                                   }));
    }
    { // losses on a small map
        Tensor g({4, 4});
        for (double& v : g.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        out.push_back(finite_diff_check("loss_bce", [&](const std::vector<Var>& v) {
            return losses::bce(v[0], g);
        }, {rand_uniform({4, 4}, rng, 0.05, 0.95)}));
        out.push_back(finite_diff_check("loss_dice", [&](const std::vector<Var>& v) {
            return losses::dice(v[0], g);
        }, {rand_uniform({4, 4}, rng, 0.05, 0.95)}));
        out.push_back(finite_diff_check("loss_ual", [&](const std::vector<Var>& v) {
            return losses::ual(v[0]);
        }, {rand_uniform({4, 4}, rng, 0.05, 0.95)}));
    }
    { // query loss: caption side is a fixed target, query side differentiates
        std::array<Tensor, 4> I_fixed;
        std::vector<Tensor> q_inputs;
        for (std::size_t i = 0; i < 4; ++i) {
            I_fixed[i] = rand_t({3, 2}, rng, 0.8);
            q_inputs.push_back(rand_t({3, 2}, rng, 0.8));
        }
        out.push_back(finite_diff_check("loss_query", [&](const std::vector<Var>& v) {
            std::array<Var, 4> I, Q;
            for (std::size_t i = 0; i < 4; ++i) {
                I[i] = Var(I_fixed[i], false);
                Q[i] = v[i];
            }
            return losses::query_loss(I, Q);
        }, q_inputs));
    }
    { // weighted total with every term active
        Tensor g({4, 4});
        for (double& v : g.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        std::array<Tensor, 4> I_fixed;
        std::vector<Tensor> inputs{rand_uniform({4, 4}, rng, 0.05, 0.95)};
        for (std::size_t i = 0; i < 4; ++i) {
            I_fixed[i] = rand_t({3, 2}, rng, 0.8);
            inputs.push_back(rand_t({3, 2}, rng, 0.8));
        }
        out.push_back(finite_diff_check("loss_total", [&](const std::vector<Var>& v) {
            std::array<Var, 4> I, Q;
            for (std::size_t i = 0; i < 4; ++i) {
                I[i] = Var(I_fixed[i], false);
                Q[i] = v[1 + i];
            }
            return losses::total_loss(v[0], g, I, Q, LossWeights::supervised()).total;
        }, inputs));
    }
    { // alignment + query loss end to end through projector, mixer and query
        auto params = params_with_prefix(store, "mfa.");
        std::vector<Tensor> inputs;
        for (std::size_t s : kPyramidStrides) {
            std::size_t g = ecfg.image_size / s;
            inputs.push_back(rand_t({g * g, ecfg.d_v}, rng, 0.5));
        }
        std::array<Tensor, 4> I_fixed;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t g = ecfg.image_size / kPyramidStrides[i];
            I_fixed[i] = rand_t({g * g, mcfg.d}, rng, 0.6);
        }
        out.push_back(check_module("align_query_loss", store, params, inputs,
                                   [&](Workspace& ws, const std::vector<Var>& v) {
                                       MultiScaleFeatures feats;
                                       for (std::size_t i = 0; i < 4; ++i) feats.feats[i] = v[i];
                                       AlignResult a = net.mfa().align_all(ws, feats, nullptr, false);
                                       std::array<Var, 4> I;
                                       for (std::size_t i = 0; i < 4; ++i) I[i] = Var(I_fixed[i], false);
                                       return losses::query_loss(I, a.query.scales);
                                   }));
    }
    return out;
}

struct SuiteResult {
    std::vector<GradReport> reports;
    double worst = 0.0;
    bool all_ok(double tol = 1e-4) const {
        for (const auto& r : reports)
            if (!r.ok(tol)) return false;
        return true;
    }
};

inline SuiteResult run_all(const std::vector<std::uint64_t>& seeds = {1, 2, 3, 4, 5}) {
    SuiteResult res;
    for (std::uint64_t seed : seeds) {
        auto prim = run_primitive_checks(seed);
        auto comp = run_composite_checks(seed);
        for (auto& r : prim) {
            r.op += "/seed" + std::to_string(seed);
            res.worst = std::max(res.worst, r.max_rel_err);
            res.reports.push_back(std::move(r));
        }
        for (auto& r : comp) {
            r.op += "/seed" + std::to_string(seed);
            res.worst = std::max(res.worst, r.max_rel_err);
            res.reports.push_back(std::move(r));
        }
    }
    return res;
}

} // namespace gradsuite
} // namespace camoseg
