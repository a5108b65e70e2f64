// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "camoseg/io/caption.hpp"
#include "camoseg/io/checkpoint.hpp"
#include "camoseg/io/dataset.hpp"
#include "camoseg/metrics/metrics.hpp"
#include "camoseg/model/network.hpp"
#include "camoseg/train/config.hpp"
#include "camoseg/train/trainer.hpp"

namespace camoseg {

inline std::unique_ptr<Network> network_from_config(const RunConfig& cfg) {
    return std::make_unique<Network>(cfg.encoder, cfg.mfa, cfg.seed);
}

inline std::unique_ptr<Network> network_from_checkpoint(const std::string& path) {
    auto entries = io::read_checkpoint(path);
    auto [ec, mc] = Network::configs_from_entries(entries);
    auto net = std::make_unique<Network>(ec, mc, /*seed=*/0);
    io::load_checkpoint(path, net->store());
    return net;
}

inline io::CaptionProvider caption_provider_from_config(const RunConfig& cfg) {
    io::CaptionProvider p;
    p.mode = cfg.caption_mode == "file" ? io::CaptionProvider::Mode::file
                                        : io::CaptionProvider::Mode::synthetic;
    p.prompt = cfg.caption_prompt;
    p.caption_dir = cfg.caption_dir;
    p.L_t = cfg.mfa.L_t;
    p.d_t = cfg.mfa.d_t;
    p.seed = cfg.seed;
    return p;
}

// train subcommand body; returns the final full-set BCE.
inline double run_training(const RunConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    auto net = network_from_config(cfg);
    auto samples = io::load_dataset(cfg.dataset);
    io::CaptionProvider provider = caption_provider_from_config(cfg);
    log << "# dataset " << cfg.dataset << " (" << samples.size() << " samples), caption provider "
        << cfg.caption_mode << ", prompt \"" << provider.prompt << "\"\n";
    Trainer trainer(*net, cfg, std::move(samples), provider, log);
    trainer.run();
    double bce = trainer.full_set_bce();
    log << "# final full-set bce " << bce << "\n";
    return bce;
}

// infer subcommand body: reads one image, writes the predicted mask, returns
// wall-clock seconds for the forward pass.
inline double run_inference(Network& net, const std::string& image_path,
                            const std::string& out_path, Network::InferMode mode,
                            const Tensor* caption) {
    Tensor image = io::read_ppm(image_path);
    auto t0 = std::chrono::steady_clock::now();
    Tensor probs = net.infer_probs(image, mode, caption);
    auto t1 = std::chrono::steady_clock::now();
    io::write_pgm(out_path, probs);
    return std::chrono::duration<double>(t1 - t0).count();
}

namespace detail {

inline std::vector<std::string> pgm_ids(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) throw format_error(dir + ": not a directory");
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace detail

// Scores every ground-truth id against the matching prediction file. Missing
// prediction files are listed in one error.
inline metrics::EvalReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir) {
    namespace fs = std::filesystem;
    auto ids = detail::pgm_ids(gt_dir);
    if (ids.empty()) throw format_error(gt_dir + ": no .pgm ground-truth files");
    std::string missing;
    for (const auto& id : ids)
        if (!fs::exists(fs::path(pred_dir) / (id + ".pgm"))) missing += " " + id;
    if (!missing.empty()) throw format_error(pred_dir + ": missing prediction(s):" + missing);

    std::vector<metrics::ImageScores> scores;
    for (const auto& id : ids) {
        Tensor gt = io::read_pgm((fs::path(gt_dir) / (id + ".pgm")).string());
        for (double& v : gt.data) v = v >= 0.5 ? 1.0 : 0.0;
        Tensor pred = io::read_pgm((fs::path(pred_dir) / (id + ".pgm")).string());
        pred = metrics::normalize_prediction(pred);
        scores.push_back(metrics::score_image(id, pred, gt));
    }
    return metrics::make_report(std::move(scores));
}

inline std::string render_report_row(const metrics::ImageScores& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %8.4f %8.4f %8.4f %8.4f %8.4f", s.id.c_str(), s.fwb,
                  s.mae, s.s, s.e, s.iou);
    return buf;
}

inline void render_report_table(const metrics::EvalReport& rep, std::ostream& out) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s", "image", "fwb", "mae", "s", "e",
                  "iou");
    out << buf << "\n";
    for (const auto& s : rep.images) out << render_report_row(s) << "\n";
    out << render_report_row(rep.mean) << "\n";
}

inline void write_report_csv(const metrics::EvalReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw format_error(path + ": cannot open for writing");
    out << "image,fwb,mae,s,e,iou\n";
    auto row = [&](const metrics::ImageScores& s) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f", s.id.c_str(), s.fwb, s.mae,
                      s.s, s.e, s.iou);
        out << buf << "\n";
    };
    for (const auto& s : rep.images) row(s);
    row(rep.mean);
}

} // namespace camoseg
