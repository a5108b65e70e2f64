// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <string>

#include "camoseg/core/error.hpp"
#include "camoseg/model/encoder.hpp"
#include "camoseg/model/losses.hpp"
#include "camoseg/model/mfa.hpp"

namespace camoseg {

enum class RunMode { zeroshot, supervised };

struct RunConfig {
    RunMode mode = RunMode::zeroshot;
    EncoderConfig encoder;   // toy backbone defaults
    MfaConfig mfa;           // d = 256 default
    double lr = 1.5e-4;
    double mixer_lr_scale = 1.0;   // relative rate for the text-mixer group
    double adapter_lr_scale = 1.0; // relative rate for the adapter group
    double decoder_lr_scale = 1.0; // relative rate for the decoder group
    double weight_decay = 0.05;
    std::size_t epochs = 0;         // 0 = mode default (20 zero-shot, 50 supervised)
    std::size_t warmup_epochs = 0;  // 0 = mode default (6 zero-shot, 10 supervised)
    std::size_t warmup_steps = 0;   // overrides warmup_epochs when nonzero
    std::size_t max_steps = 0;      // optional cap on the total step count
    std::size_t batch_size = 4;
    std::size_t threads = 1;   // batch-element workers; results are identical for any count
    std::uint64_t seed = 42;
    bool augment = true;            // random horizontal flips
    double stop_bce = 0.0;          // early stop once full-set BCE falls below (0 = off)
    std::string dataset;
    std::string caption_mode = "synthetic"; // or "file"
    std::string caption_dir;
    std::string caption_prompt = "Describe the image.";
    std::string checkpoint_out = "model.ckpt";
    std::size_t checkpoint_every = 100;
    std::size_t log_every = 1;

    std::size_t effective_epochs() const {
        if (epochs) return epochs;
        return mode == RunMode::zeroshot ? 20 : 50;
    }
    std::size_t effective_warmup_epochs() const {
        if (warmup_epochs) return warmup_epochs;
        return mode == RunMode::zeroshot ? 6 : 10;
    }
    LossWeights loss_weights() const {
        return mode == RunMode::zeroshot ? LossWeights::zeroshot() : LossWeights::supervised();
    }

    void validate() const {
        encoder.validate();
        mfa.validate();
        if (lr <= 0) throw config_error("config: lr must be positive");
        if (batch_size == 0) throw config_error("config: batch_size must be positive");
        if (caption_mode != "synthetic" && caption_mode != "file")
            throw config_error("config: caption_mode must be 'synthetic' or 'file'");
        if (caption_mode == "file" && caption_dir.empty())
            throw config_error("config: caption_mode=file requires caption_dir");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::size_t to_size(const std::string& v, const std::string& key) {
    try {
        return static_cast<std::size_t>(std::stoull(v));
    } catch (...) {
        throw config_error("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw config_error("");
        return d;
    } catch (...) {
        throw config_error("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

} // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::to_bool;
    using detail::to_double;
    using detail::to_size;
    if (key == "mode") {
        if (value == "zeroshot") cfg.mode = RunMode::zeroshot;
        else if (value == "supervised") cfg.mode = RunMode::supervised;
        else throw config_error("config: mode must be 'zeroshot' or 'supervised', got '" + value + "'");
    } else if (key == "image_size") cfg.encoder.image_size = to_size(value, key);
    else if (key == "patch_size") cfg.encoder.patch_size = to_size(value, key);
    else if (key == "depth") cfg.encoder.depth = to_size(value, key);
    else if (key == "d_v") cfg.encoder.d_v = to_size(value, key);
    else if (key == "heads") cfg.encoder.heads = to_size(value, key);
    else if (key == "d_lr") cfg.encoder.d_lr = to_size(value, key);
    else if (key == "mlp_ratio") cfg.encoder.mlp_ratio = to_size(value, key);
    else if (key == "L_t") cfg.mfa.L_t = to_size(value, key);
    else if (key == "d_t") cfg.mfa.d_t = to_size(value, key);
    else if (key == "d") cfg.mfa.d = to_size(value, key);
    else if (key == "lr") cfg.lr = to_double(value, key);
    else if (key == "mixer_lr_scale") cfg.mixer_lr_scale = to_double(value, key);
    else if (key == "adapter_lr_scale") cfg.adapter_lr_scale = to_double(value, key);
    else if (key == "decoder_lr_scale") cfg.decoder_lr_scale = to_double(value, key);
    else if (key == "weight_decay") cfg.weight_decay = to_double(value, key);
    else if (key == "epochs") cfg.epochs = to_size(value, key);
    else if (key == "warmup_epochs") cfg.warmup_epochs = to_size(value, key);
    else if (key == "warmup_steps") cfg.warmup_steps = to_size(value, key);
    else if (key == "max_steps") cfg.max_steps = to_size(value, key);
    else if (key == "batch_size") cfg.batch_size = to_size(value, key);
    else if (key == "threads") cfg.threads = to_size(value, key);
    else if (key == "seed") cfg.seed = to_size(value, key);
    else if (key == "augment") cfg.augment = to_bool(value, key);
    else if (key == "stop_bce") cfg.stop_bce = to_double(value, key);
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "caption_mode") cfg.caption_mode = value;
    else if (key == "caption_dir") cfg.caption_dir = value;
    else if (key == "caption_prompt") cfg.caption_prompt = value;
    else if (key == "checkpoint_out") cfg.checkpoint_out = value;
    else if (key == "checkpoint_every") cfg.checkpoint_every = to_size(value, key);
    else if (key == "log_every") cfg.log_every = to_size(value, key);
    else throw config_error("config: unknown key '" + key + "'");
}

// UTF-8 text, one `key = value` per line, '#' starts a comment.
inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error(path + ": cannot open config");
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw config_error(path + ":" + std::to_string(lineno) + ": empty key");
        try {
            apply_config_line(cfg, key, value);
        } catch (const config_error& e) {
            throw config_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace camoseg
