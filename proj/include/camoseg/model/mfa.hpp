// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>

#include "camoseg/core/ops.hpp"
#include "camoseg/model/encoder.hpp"
#include "camoseg/model/params.hpp"

namespace camoseg {

struct MfaConfig {
    std::size_t L_t = 16; // caption/query token count, must be even
    std::size_t d_t = 48; // caption/query token width
    std::size_t d = 256;  // aligned width shared with the decoder

    void validate() const {
        if (L_t == 0 || L_t % 2 != 0) throw config_error("mfa: L_t must be positive and even");
        if (d_t == 0 || d == 0) throw config_error("mfa: token widths must be positive");
    }
};

// Image-grouped token matrices, one per pyramid stride; every row is a convex
// combination of the mixed text-token rows.
struct GroupedTokens {
    enum class Role { caption, query };
    Role role;
    std::array<Var, 4> scales;
};

struct AlignResult {
    std::optional<GroupedTokens> caption; // absent in codebook inference mode
    GroupedTokens query;
};

struct MixerBlockParams {
    Parameter *ln1_g, *ln1_b;
    Parameter *sp_W1, *sp_b1, *sp_W2, *sp_b2; // token-axis MLP
    Parameter *ln2_g, *ln2_b;
    Parameter *ch_W1, *ch_b1, *ch_W2, *ch_b2; // channel-axis MLP
};

// Multi-scale fine-grained alignment: shared feature projector over all
// scales, shared text mixer over caption and query, and the token-matching
// operation. Owns the trainable codebook query.
class Mfa {
public:
    MfaConfig cfg;

    Mfa(ParamStore& store, const MfaConfig& config, std::size_t d_v, std::uint64_t seed)
        : cfg(config), d_v_(d_v) {
        cfg.validate();
        auto weight = [&](const std::string& name, Shape s) {
            Rng r = param_rng(seed, name);
            return &store.add(name, xavier_init(s, r), true);
        };
        auto zeros = [&](const std::string& name, Shape s) { return &store.add(name, Tensor::zeros(s), true); };
        auto ones = [&](const std::string& name, Shape s) { return &store.add(name, Tensor::full(s, 1.0), true); };

        proj_W1_ = weight("mfa.projector.W1", {d_v_, cfg.d});
        proj_b1_ = zeros("mfa.projector.b1", {cfg.d});
        proj_W2_ = weight("mfa.projector.W2", {cfg.d, cfg.d});
        proj_b2_ = zeros("mfa.projector.b2", {cfg.d});

        auto mixer_block = [&](int idx, std::size_t tokens, std::size_t ch_in, std::size_t ch_out) {
            std::string base = "mfa.mixer.block" + std::to_string(idx) + ".";
            MixerBlockParams mb;
            mb.ln1_g = ones(base + "ln1.gamma", {ch_in});
            mb.ln1_b = zeros(base + "ln1.beta", {ch_in});
            mb.sp_W1 = weight(base + "spatial.W1", {tokens, tokens});
            mb.sp_b1 = zeros(base + "spatial.b1", {tokens});
            mb.sp_W2 = weight(base + "spatial.W2", {tokens, tokens});
            mb.sp_b2 = zeros(base + "spatial.b2", {tokens});
            mb.ln2_g = ones(base + "ln2.gamma", {ch_in});
            mb.ln2_b = zeros(base + "ln2.beta", {ch_in});
            mb.ch_W1 = weight(base + "channel.W1", {ch_in, ch_out});
            mb.ch_b1 = zeros(base + "channel.b1", {ch_out});
            mb.ch_W2 = weight(base + "channel.W2", {ch_out, ch_out});
            mb.ch_b2 = zeros(base + "channel.b2", {ch_out});
            return mb;
        };
        // Block 1 keeps the caption width; block 2 widens d_t -> d after the
        // token-axis halving (its channel-mixer residual is dropped because
        // the widths differ).
        block1_ = mixer_block(1, cfg.L_t, cfg.d_t, cfg.d_t);
        block2_ = mixer_block(2, cfg.L_t / 2, cfg.d_t, cfg.d);

        down_W_ = weight("mfa.mixer.down.W", {cfg.L_t / 2, cfg.L_t});

        Rng rq = param_rng(seed, "mfa.query.Q0");
        query_Q0_ = &store.add("mfa.query.Q0", gaussian_init({cfg.L_t, cfg.d_t}, rq, 0.02), true);
    }

    Parameter& query_param() const { return *query_Q0_; }
    const Parameter* projector_W1() const { return proj_W1_; }

    // Two-layer channel MLP, identical parameters at every scale.
    Var project(Workspace& ws, const Var& v) const {
        if (v.value().rank() != 2 || v.value().shape[1] != d_v_)
            throw dimension_error("project: expected [*, " + std::to_string(d_v_) + "], got " +
                                  shape_str(v.value().shape));
        Var h = ops::gelu(ops::linear(v, ws.use(*proj_W1_), ws.use(*proj_b1_)));
        return ops::linear(h, ws.use(*proj_W2_), ws.use(*proj_b2_));
    }

    // Mixer block: token-axis MLP on the transposed sequence with residual,
    // then channel MLP with residual when the widths allow it.
    Var mixer_block_forward(Workspace& ws, const Var& T, const MixerBlockParams& p,
                            bool channel_residual) const {
        Var normed = ops::layer_norm(T, ws.use(*p.ln1_g), ws.use(*p.ln1_b));
        Var t = ops::transpose(normed); // [ch, tokens]
        t = ops::gelu(ops::linear(t, ws.use(*p.sp_W1), ws.use(*p.sp_b1)));
        t = ops::linear(t, ws.use(*p.sp_W2), ws.use(*p.sp_b2));
        Var T_s = ops::add(ops::transpose(t), T);

        Var c = ops::layer_norm(T_s, ws.use(*p.ln2_g), ws.use(*p.ln2_b));
        c = ops::gelu(ops::linear(c, ws.use(*p.ch_W1), ws.use(*p.ch_b1)));
        c = ops::linear(c, ws.use(*p.ch_W2), ws.use(*p.ch_b2));
        return channel_residual ? ops::add(c, T_s) : c;
    }

    // [L_t, d_t] -> [L_t/2, d]. Shared between the caption and query paths.
    Var mix(Workspace& ws, const Var& T) const {
        if (T.value().rank() != 2 || T.value().shape[0] != cfg.L_t || T.value().shape[1] != cfg.d_t)
            throw config_error("mix: expected [" + std::to_string(cfg.L_t) + ", " +
                               std::to_string(cfg.d_t) + "], got " + shape_str(T.value().shape));
        Var x = mixer_block_forward(ws, T, block1_, /*channel_residual=*/true);
        x = ops::matmul(ws.use(*down_W_), x); // halve the token axis
        return mixer_block_forward(ws, x, block2_, /*channel_residual=*/false);
    }

    // Similarity -> per-row min-max -> threshold at 1/L_v -> row softmax over
    // the full row (zeroed entries included) -> weighted sum of text tokens.
    static Var token_match(const Var& v, const Var& u) {
        if (v.value().rank() != 2 || u.value().rank() != 2 ||
            v.value().shape[1] != u.value().shape[1])
            throw dimension_error("token_match: width mismatch " + shape_str(v.value().shape) +
                                  " vs " + shape_str(u.value().shape));
        std::size_t L_v = v.value().shape[0];
        Var sims = ops::minmax_rows(ops::matmul(v, ops::transpose(u)));
        Var sparse = ops::threshold_keep(sims, 1.0 / static_cast<double>(L_v));
        return ops::matmul(ops::softmax_rows(sparse), u);
    }

    Var mixed_query(Workspace& ws) const { return mix(ws, ws.use(*query_Q0_)); }

    // Runs project + mix + token_match per scale. The query path is always
    // computed; the caption path only when a caption embedding is supplied.
    AlignResult align_all(Workspace& ws, const MultiScaleFeatures& feats,
                          const Tensor* caption, bool training_mode) const {
        if (training_mode && caption == nullptr)
            throw config_error("align_all: training mode requires a caption embedding");
        AlignResult out{std::nullopt, GroupedTokens{GroupedTokens::Role::query, {}}};
        Var u_query = mixed_query(ws);
        std::optional<Var> u_caption;
        if (caption != nullptr) {
            if (caption->shape != Shape{cfg.L_t, cfg.d_t})
                throw config_error("align_all: caption embedding must be [" + std::to_string(cfg.L_t) +
                                   ", " + std::to_string(cfg.d_t) + "], got " + shape_str(caption->shape));
            u_caption = mix(ws, Var(*caption, false));
            out.caption = GroupedTokens{GroupedTokens::Role::caption, {}};
        }
        for (std::size_t i = 0; i < 4; ++i) {
            Var v = project(ws, feats.feats[i]);
            out.query.scales[i] = token_match(v, u_query);
            if (u_caption) out.caption->scales[i] = token_match(v, *u_caption);
        }
        return out;
    }

    const MixerBlockParams& block1() const { return block1_; }
    const MixerBlockParams& block2() const { return block2_; }
    const Parameter* down_param() const { return down_W_; }

private:
    std::size_t d_v_;
    Parameter *proj_W1_, *proj_b1_, *proj_W2_, *proj_b2_;
    MixerBlockParams block1_, block2_;
    Parameter* down_W_;
    Parameter* query_Q0_;
};

} // namespace camoseg
