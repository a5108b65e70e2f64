// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "camoseg/core/ops.hpp"
#include "camoseg/model/params.hpp"

namespace camoseg {

inline constexpr std::array<std::size_t, 4> kPyramidStrides = {4, 8, 16, 32};

struct EncoderConfig {
    std::size_t image_size = 64;  // H == W
    std::size_t patch_size = 8;
    std::size_t depth = 4;
    std::size_t d_v = 96;
    std::size_t heads = 4;
    std::size_t d_lr = 16;        // adapter bottleneck, << d_v
    std::size_t mlp_ratio = 4;

    void validate() const {
        if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0)
            throw config_error("encoder: image_size must be a positive multiple of patch_size");
        if (d_v == 0 || heads == 0 || d_v % heads != 0)
            throw config_error("encoder: d_v must be divisible by heads");
        if (d_lr >= d_v) throw config_error("encoder: adapter bottleneck d_lr must be < d_v");
        for (std::size_t s : kPyramidStrides)
            if (image_size % s != 0)
                throw config_error("encoder: image_size must be divisible by every pyramid stride");
    }

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t head_dim() const { return d_v / heads; }
    std::size_t ffn_hidden() const { return d_v * mlp_ratio; }
};

// Multi-scale embedding maps, one per pyramid stride. feats[i] has
// (H/stride)^2 tokens of width d_v.
struct MultiScaleFeatures {
    std::array<Var, 4> feats;

    static std::size_t index_of(std::size_t stride) {
        for (std::size_t i = 0; i < 4; ++i)
            if (kPyramidStrides[i] == stride) return i;
        throw config_error("unknown pyramid stride " + std::to_string(stride));
    }
};

struct AttentionParams {
    Parameter *Wq, *bq, *Wk, *bk, *Wv, *bv, *Wo, *bo;
};

struct BlockParams {
    Parameter *ln1_g, *ln1_b;
    AttentionParams attn;
    Parameter *ln2_g, *ln2_b;
    Parameter *ffn_W1, *ffn_b1, *ffn_W2, *ffn_b2;
};

// Low-rank bottleneck MLP beside the FFN branch, scaled by a learnable
// scalar initialized to zero so training starts at the frozen function.
struct AdapterParams {
    Parameter *W_down, *b1, *W_up, *b2, *scale;
};

struct SfpParams {
    Parameter *W, *b; // per-scale channel map
};

// Frozen toy ViT backbone with parallel adapters and the multi-scale feature
// pyramid transform. Backbone weights (patch embed, positions, blocks) are
// registered frozen; adapters and pyramid maps are trainable.
class Encoder {
public:
    EncoderConfig cfg;

    Encoder(ParamStore& store, const EncoderConfig& config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        const double sigma = 0.02;
        auto frozen_gauss = [&](const std::string& name, Shape s) {
            Rng r = param_rng(seed, name);
            return &store.add(name, gaussian_init(s, r, sigma), false);
        };
        auto frozen_zeros = [&](const std::string& name, Shape s) {
            return &store.add(name, Tensor::zeros(s), false);
        };
        auto frozen_ones = [&](const std::string& name, Shape s) {
            return &store.add(name, Tensor::full(s, 1.0), false);
        };

        std::size_t pv = cfg.patch_size * cfg.patch_size * 3;
        patch_W_ = frozen_gauss("encoder.patch.W", {pv, cfg.d_v});
        patch_b_ = frozen_zeros("encoder.patch.b", {cfg.d_v});
        pos_ = frozen_gauss("encoder.patch.pos", {cfg.tokens(), cfg.d_v});

        for (std::size_t i = 0; i < cfg.depth; ++i) {
            std::string base = "encoder.block" + std::to_string(i) + ".";
            BlockParams bp;
            bp.ln1_g = frozen_ones(base + "ln1.gamma", {cfg.d_v});
            bp.ln1_b = frozen_zeros(base + "ln1.beta", {cfg.d_v});
            bp.attn.Wq = frozen_gauss(base + "attn.Wq", {cfg.d_v, cfg.d_v});
            bp.attn.bq = frozen_zeros(base + "attn.bq", {cfg.d_v});
            bp.attn.Wk = frozen_gauss(base + "attn.Wk", {cfg.d_v, cfg.d_v});
            bp.attn.bk = frozen_zeros(base + "attn.bk", {cfg.d_v});
            bp.attn.Wv = frozen_gauss(base + "attn.Wv", {cfg.d_v, cfg.d_v});
            bp.attn.bv = frozen_zeros(base + "attn.bv", {cfg.d_v});
            bp.attn.Wo = frozen_gauss(base + "attn.Wo", {cfg.d_v, cfg.d_v});
            bp.attn.bo = frozen_zeros(base + "attn.bo", {cfg.d_v});
            bp.ln2_g = frozen_ones(base + "ln2.gamma", {cfg.d_v});
            bp.ln2_b = frozen_zeros(base + "ln2.beta", {cfg.d_v});
            bp.ffn_W1 = frozen_gauss(base + "ffn.W1", {cfg.d_v, cfg.ffn_hidden()});
            bp.ffn_b1 = frozen_zeros(base + "ffn.b1", {cfg.ffn_hidden()});
            bp.ffn_W2 = frozen_gauss(base + "ffn.W2", {cfg.ffn_hidden(), cfg.d_v});
            bp.ffn_b2 = frozen_zeros(base + "ffn.b2", {cfg.d_v});
            blocks_.push_back(bp);

            std::string abase = "encoder.adapter" + std::to_string(i) + ".";
            AdapterParams ap;
            Rng rd = param_rng(seed, abase + "Wdown");
            Rng ru = param_rng(seed, abase + "Wup");
            ap.W_down = &store.add(abase + "Wdown", gaussian_init({cfg.d_v, cfg.d_lr}, rd, sigma), true);
            ap.b1 = &store.add(abase + "b1", Tensor::zeros({cfg.d_lr}), true);
            ap.W_up = &store.add(abase + "Wup", gaussian_init({cfg.d_lr, cfg.d_v}, ru, sigma), true);
            ap.b2 = &store.add(abase + "b2", Tensor::zeros({cfg.d_v}), true);
            ap.scale = &store.add(abase + "scale", Tensor::zeros({1}), true);
            adapters_.push_back(ap);
        }

        for (std::size_t s : kPyramidStrides) {
            std::string base = "encoder.sfp" + std::to_string(s) + ".";
            Rng rw = param_rng(seed, base + "W");
            SfpParams sp;
            sp.W = &store.add(base + "W", xavier_init({cfg.d_v, cfg.d_v}, rw), true);
            sp.b = &store.add(base + "b", Tensor::zeros({cfg.d_v}), true);
            sfp_[MultiScaleFeatures::index_of(s)] = sp;
        }
    }

    const std::vector<BlockParams>& blocks() const { return blocks_; }
    const std::vector<AdapterParams>& adapters() const { return adapters_; }

    // Non-overlapping patch flatten, linear projection, learned positions.
    Var patch_embed(Workspace& ws, const Tensor& image) const {
        if (image.shape != Shape{cfg.image_size, cfg.image_size, 3})
            throw config_error("patch_embed: image " + shape_str(image.shape) + " does not match config " +
                               std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "x3");
        std::size_t g = cfg.grid(), p = cfg.patch_size;
        Tensor patches({cfg.tokens(), p * p * 3});
        for (std::size_t py = 0; py < g; ++py)
            for (std::size_t px = 0; px < g; ++px) {
                std::size_t tok = py * g + px;
                std::size_t o = 0;
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        for (std::size_t c = 0; c < 3; ++c)
                            patches.data[tok * p * p * 3 + o++] = image.at(py * p + y, px * p + x, c);
            }
        Var flat(std::move(patches), false);
        Var tokens = ops::linear(flat, ws.use(*patch_W_), ws.use(*patch_b_));
        return ops::add(tokens, ws.use(*pos_));
    }

    Var attention(Workspace& ws, const Var& x, const AttentionParams& p) const {
        Var q = ops::linear(x, ws.use(*p.Wq), ws.use(*p.bq));
        Var k = ops::linear(x, ws.use(*p.Wk), ws.use(*p.bk));
        Var v = ops::linear(x, ws.use(*p.Wv), ws.use(*p.bv));
        std::size_t hd = cfg.head_dim();
        double scale = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<Var> ctx;
        ctx.reserve(cfg.heads);
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            Var qh = ops::slice_cols(q, h * hd, hd);
            Var kh = ops::slice_cols(k, h * hd, hd);
            Var vh = ops::slice_cols(v, h * hd, hd);
            Var scores = ops::mul_scalar(ops::matmul(qh, ops::transpose(kh)), scale);
            ctx.push_back(ops::matmul(ops::softmax_rows(scores), vh));
        }
        return ops::linear(ops::concat_cols(ctx), ws.use(*p.Wo), ws.use(*p.bo));
    }

    // Pre-LN block: attention residual, then FFN residual.
    Var block_forward(Workspace& ws, const Var& E, const BlockParams& p) const {
        Var attn_in = ops::layer_norm(E, ws.use(*p.ln1_g), ws.use(*p.ln1_b));
        Var E_hat = ops::add(attention(ws, attn_in, p.attn), E);
        return ops::add(ffn(ws, E_hat, p), E_hat);
    }

    Var ffn(Workspace& ws, const Var& E_hat, const BlockParams& p) const {
        Var h = ops::layer_norm(E_hat, ws.use(*p.ln2_g), ws.use(*p.ln2_b));
        h = ops::relu(ops::linear(h, ws.use(*p.ffn_W1), ws.use(*p.ffn_b1)));
        return ops::linear(h, ws.use(*p.ffn_W2), ws.use(*p.ffn_b2));
    }

    // sigma(Z W_down + b1) W_up + b2 with ReLU; no normalization inside.
    Var adapter_forward(Workspace& ws, const Var& Z, const AdapterParams& p) const {
        Var h = ops::relu(ops::linear(Z, ws.use(*p.W_down), ws.use(*p.b1)));
        return ops::linear(h, ws.use(*p.W_up), ws.use(*p.b2));
    }

    // Adapter branch reads the post-attention residual stream directly, gets
    // scaled, and joins the FFN branch and the residual.
    Var adapted_block_forward(Workspace& ws, const Var& E, const BlockParams& p,
                              const AdapterParams& a) const {
        Var attn_in = ops::layer_norm(E, ws.use(*p.ln1_g), ws.use(*p.ln1_b));
        Var E_hat = ops::add(attention(ws, attn_in, p.attn), E);
        Var adapter_branch = ops::scale_by(ws.use(*a.scale), adapter_forward(ws, E_hat, a));
        return ops::add(ops::add(adapter_branch, ffn(ws, E_hat, p)), E_hat);
    }

    Var encode(Workspace& ws, const Tensor& image, bool adapted = true) const {
        Var E = patch_embed(ws, image);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            E = adapted ? adapted_block_forward(ws, E, blocks_[i], adapters_[i])
                        : block_forward(ws, E, blocks_[i]);
        return E;
    }

    // Tokens -> native grid -> per-stride bilinear resize -> per-scale channel
    // map -> tokens.
    MultiScaleFeatures sfp(Workspace& ws, const Var& tokens) const {
        std::size_t L = tokens.value().shape[0];
        std::size_t g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(L))));
        if (g * g != L) throw config_error("sfp: token count " + std::to_string(L) + " is not a square grid");
        Var grid = ops::reshape(tokens, {g, g, cfg.d_v});
        MultiScaleFeatures out;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t target = cfg.image_size / kPyramidStrides[i];
            Var resized = ops::resize_bilinear(grid, target, target);
            Var toks = ops::reshape(resized, {target * target, cfg.d_v});
            const SfpParams& sp = sfp_[i];
            out.feats[i] = ops::linear(toks, ws.use(*sp.W), ws.use(*sp.b));
        }
        return out;
    }

    MultiScaleFeatures forward(Workspace& ws, const Tensor& image, bool adapted = true) const {
        return sfp(ws, encode(ws, image, adapted));
    }

private:
    Parameter *patch_W_, *patch_b_, *pos_;
    std::vector<BlockParams> blocks_;
    std::vector<AdapterParams> adapters_;
    std::array<SfpParams, 4> sfp_{};
};

} // namespace camoseg
