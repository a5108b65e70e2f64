// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>

#include "camoseg/core/ops.hpp"
#include "camoseg/model/encoder.hpp"
#include "camoseg/model/mfa.hpp"
#include "camoseg/model/params.hpp"

namespace camoseg {

// All-MLP mask decoder: nine linear layers total.
//   4 per-scale fusion maps  [V^(n) | A^(n)] -> d
//   1 cross-scale fusion map 4d -> d at the stride-4 grid
//   2 upsample-stage maps    d -> d, each followed by a 2x resize
//   2 head maps              d -> d/2 -> 1
// GELU between consecutive layers, no normalization anywhere.
class Decoder {
public:
    Decoder(ParamStore& store, std::size_t image_size, std::size_t d_v, std::size_t d,
            std::uint64_t seed)
        : image_size_(image_size), d_v_(d_v), d_(d) {
        if (d_ < 2) throw config_error("decoder: width d must be at least 2");
        auto weight = [&](const std::string& name, Shape s, double gain) {
            Rng r = param_rng(seed, name);
            return &store.add(name, xavier_init(s, r, gain), true);
        };
        auto zeros = [&](const std::string& name, Shape s) { return &store.add(name, Tensor::zeros(s), true); };
        for (std::size_t i = 0; i < 4; ++i) {
            std::string base = "decoder.scale" + std::to_string(kPyramidStrides[i]) + ".";
            scale_W_[i] = weight(base + "W", {d_v_ + d_, d_}, 1.7);
            // start the fusion leaning on the image embeddings; the grouped
            // tokens contribute through training pressure, not initialization
            for (std::size_t r = d_v_; r < d_v_ + d_; ++r)
                for (std::size_t c = 0; c < d_; ++c) scale_W_[i]->tensor.at(r, c) *= 0.25;
            scale_b_[i] = zeros(base + "b", {d_});
        }
        fuse_W_ = weight("decoder.fuse.W", {4 * d_, d_}, 1.7);
        fuse_b_ = zeros("decoder.fuse.b", {d_});
        up1_W_ = weight("decoder.up1.W", {d_, d_}, 1.7);
        up1_b_ = zeros("decoder.up1.b", {d_});
        up2_W_ = weight("decoder.up2.W", {d_, d_}, 1.7);
        up2_b_ = zeros("decoder.up2.b", {d_});
        head1_W_ = weight("decoder.head1.W", {d_, d_ / 2}, 2.5);
        head1_b_ = zeros("decoder.head1.b", {d_ / 2});
        head2_W_ = weight("decoder.head2.W", {d_ / 2, 1}, 2.5);
        head2_b_ = zeros("decoder.head2.b", {1});
    }

    // feats and grouped must share scales; the same function serves the
    // caption-grouped inputs in training and the query-grouped inputs in
    // codebook inference.
    Var decode(Workspace& ws, const MultiScaleFeatures& feats,
               const std::array<Var, 4>& grouped) const {
        std::size_t s4 = image_size_ / 4;
        std::vector<Var> at_stride4;
        at_stride4.reserve(4);
        for (std::size_t i = 0; i < 4; ++i) {
            const Var& v = feats.feats[i];
            const Var& a = grouped[i];
            if (v.value().shape[0] != a.value().shape[0])
                throw dimension_error("decode: scale " + std::to_string(kPyramidStrides[i]) +
                                      " token counts differ, " + shape_str(v.value().shape) + " vs " +
                                      shape_str(a.value().shape));
            std::size_t g = image_size_ / kPyramidStrides[i];
            if (v.value().shape[0] != g * g)
                throw dimension_error("decode: scale " + std::to_string(kPyramidStrides[i]) +
                                      " expects " + std::to_string(g * g) + " tokens");
            Var fused = ops::gelu(ops::linear(ops::concat_cols({v, a}), ws.use(*scale_W_[i]),
                                              ws.use(*scale_b_[i])));
            Var grid = ops::reshape(fused, {g, g, d_});
            at_stride4.push_back(ops::reshape(ops::resize_bilinear(grid, s4, s4), {s4 * s4, d_}));
        }
        Var x = ops::gelu(ops::linear(ops::concat_cols(at_stride4), ws.use(*fuse_W_), ws.use(*fuse_b_)));

        x = ops::gelu(ops::linear(x, ws.use(*up1_W_), ws.use(*up1_b_)));
        x = ops::reshape(x, {s4, s4, d_});
        x = ops::resize_bilinear(x, 2 * s4, 2 * s4);
        x = ops::reshape(x, {4 * s4 * s4, d_});

        x = ops::gelu(ops::linear(x, ws.use(*up2_W_), ws.use(*up2_b_)));
        x = ops::reshape(x, {2 * s4, 2 * s4, d_});
        x = ops::resize_bilinear(x, image_size_, image_size_);
        x = ops::reshape(x, {image_size_ * image_size_, d_});

        x = ops::gelu(ops::linear(x, ws.use(*head1_W_), ws.use(*head1_b_)));
        x = ops::linear(x, ws.use(*head2_W_), ws.use(*head2_b_));
        return ops::reshape(x, {image_size_, image_size_});
    }

private:
    std::size_t image_size_, d_v_, d_;
    std::array<Parameter*, 4> scale_W_{}, scale_b_{};
    Parameter *fuse_W_, *fuse_b_;
    Parameter *up1_W_, *up1_b_, *up2_W_, *up2_b_;
    Parameter *head1_W_, *head1_b_, *head2_W_, *head2_b_;
};

} // namespace camoseg
