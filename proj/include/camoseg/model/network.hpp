// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>

#include "camoseg/model/decoder.hpp"
#include "camoseg/model/encoder.hpp"
#include "camoseg/model/losses.hpp"
#include "camoseg/model/mfa.hpp"

namespace camoseg {

// Full segmentation network: frozen backbone + adapters, multi-scale
// alignment with the learnable query, and the mask decoder, over one
// parameter store.
class Network {
public:
    Network(const EncoderConfig& enc_cfg, const MfaConfig& mfa_cfg, std::uint64_t seed)
        : encoder_(store_, enc_cfg, seed),
          mfa_(store_, mfa_cfg, enc_cfg.d_v, seed),
          decoder_(store_, enc_cfg.image_size, enc_cfg.d_v, mfa_cfg.d, seed) {
        // architecture dims ride along in the checkpoint as frozen entries so
        // a saved model is self-describing
        auto meta = [&](const char* name, std::size_t v) {
            store_.add(std::string("meta.") + name, Tensor({1}, {static_cast<double>(v)}), false);
        };
        meta("image_size", enc_cfg.image_size);
        meta("patch_size", enc_cfg.patch_size);
        meta("depth", enc_cfg.depth);
        meta("d_v", enc_cfg.d_v);
        meta("heads", enc_cfg.heads);
        meta("d_lr", enc_cfg.d_lr);
        meta("mlp_ratio", enc_cfg.mlp_ratio);
        meta("L_t", mfa_cfg.L_t);
        meta("d_t", mfa_cfg.d_t);
        meta("d", mfa_cfg.d);
    }

    // Reads the meta entries of a checkpoint and rebuilds a matching network.
    template <typename Entries>
    static std::pair<EncoderConfig, MfaConfig> configs_from_entries(const Entries& entries) {
        EncoderConfig ec;
        MfaConfig mc;
        auto get = [&](const char* name) -> std::size_t {
            std::string full = std::string("meta.") + name;
            for (const auto& e : entries)
                if (e.name == full) return static_cast<std::size_t>(e.tensor.item());
            throw format_error("checkpoint: missing meta entry '" + full + "'");
        };
        ec.image_size = get("image_size");
        ec.patch_size = get("patch_size");
        ec.depth = get("depth");
        ec.d_v = get("d_v");
        ec.heads = get("heads");
        ec.d_lr = get("d_lr");
        ec.mlp_ratio = get("mlp_ratio");
        mc.L_t = get("L_t");
        mc.d_t = get("d_t");
        mc.d = get("d");
        return {ec, mc};
    }

    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    Encoder& encoder() { return encoder_; }
    Mfa& mfa() { return mfa_; }
    Decoder& decoder() { return decoder_; }

    struct TrainForward {
        Var logits;               // [H, W]
        Var probs;                // sigmoid(logits)
        std::array<Var, 4> I, Q;  // grouped caption / query tokens per scale
    };

    // Training path: caption-grouped tokens feed the decoder; the query path
    // is produced alongside for the query loss.
    TrainForward forward_train(Workspace& ws, const Tensor& image, const Tensor& caption) const {
        MultiScaleFeatures feats = encoder_.forward(ws, image);
        AlignResult aligned = mfa_.align_all(ws, feats, &caption, /*training_mode=*/true);
        TrainForward out;
        out.I = aligned.caption->scales;
        out.Q = aligned.query.scales;
        out.logits = decoder_.decode(ws, feats, out.I);
        out.probs = ops::sigmoid(out.logits);
        return out;
    }

    enum class InferMode { codebook, caption };

    // Codebook mode never touches a caption; caption mode decodes the grouped
    // caption tokens instead.
    Var infer_logits(Workspace& ws, const Tensor& image, InferMode mode,
                     const Tensor* caption = nullptr) const {
        MultiScaleFeatures feats = encoder_.forward(ws, image);
        if (mode == InferMode::codebook) {
            AlignResult aligned = mfa_.align_all(ws, feats, nullptr, /*training_mode=*/false);
            return decoder_.decode(ws, feats, aligned.query.scales);
        }
        if (caption == nullptr) throw config_error("infer: caption mode requires a caption embedding");
        AlignResult aligned = mfa_.align_all(ws, feats, caption, /*training_mode=*/false);
        return decoder_.decode(ws, feats, aligned.caption->scales);
    }

    Tensor infer_probs(const Tensor& image, InferMode mode, const Tensor* caption = nullptr) const {
        Workspace ws;
        Var logits = infer_logits(ws, image, mode, caption);
        return ops::sigmoid(logits).value();
    }

private:
    ParamStore store_;
    Encoder encoder_;
    Mfa mfa_;
    Decoder decoder_;
};

} // namespace camoseg
