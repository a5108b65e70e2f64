// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "camoseg/gradcheck_suite.hpp"
#include "camoseg/pipeline.hpp"

namespace {

// exit codes: 0 success, 1 usage, 2 format error, 3 numeric failure
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumeric = 3;

int cmd_gen_data(std::uint64_t seed, std::size_t count, std::size_t size, const std::string& out) {
    camoseg::io::synth_generate(seed, count, size, out);
    std::cout << "wrote " << count << " samples of size " << size << "x" << size << " to " << out
              << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path) {
    camoseg::RunConfig cfg = camoseg::parse_config(config_path);
    camoseg::run_training(cfg, std::cout);
    std::cout << "checkpoint written to " << cfg.checkpoint_out << "\n";
    return kExitOk;
}

int cmd_infer(const std::string& ckpt, const std::string& image, const std::string& mode,
              const std::string& out, const std::string& caption_path) {
    camoseg::Network::InferMode m;
    if (mode == "codebook") m = camoseg::Network::InferMode::codebook;
    else if (mode == "caption") m = camoseg::Network::InferMode::caption;
    else throw camoseg::config_error("infer: mode must be 'codebook' or 'caption', got '" + mode + "'");

    if (m == camoseg::Network::InferMode::caption && caption_path.empty())
        throw camoseg::config_error("infer: caption mode requires --caption <embedding file>");

    auto net = camoseg::network_from_checkpoint(ckpt);
    camoseg::Tensor caption;
    const camoseg::Tensor* cap_ptr = nullptr;
    if (!caption_path.empty() && m == camoseg::Network::InferMode::caption) {
        caption = camoseg::io::read_tensor(caption_path);
        cap_ptr = &caption;
    }
    double secs = camoseg::run_inference(*net, image, out, m, cap_ptr);
    std::printf("%s -> %s (%s mode, %.3f s/image)\n", image.c_str(), out.c_str(), mode.c_str(),
                secs);
    return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out) {
    camoseg::metrics::EvalReport rep = camoseg::evaluate_dirs(pred, gt);
    camoseg::render_report_table(rep, std::cout);
    if (!out.empty()) {
        camoseg::write_report_csv(rep, out);
        std::cout << "records written to " << out << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck() {
    auto res = camoseg::gradsuite::run_all();
    for (const auto& r : res.reports) {
        std::printf("%-28s max rel err %.3e  worst input %zu  %s\n", r.op.c_str(), r.max_rel_err,
                    r.worst_input, r.ok() ? "ok" : "FAIL");
    }
    std::printf("checked %zu operations, worst relative error %.3e\n", res.reports.size(),
                res.worst);
    if (!res.all_ok()) {
        std::fprintf(stderr, "gradcheck failed: relative error above 1e-4\n");
        return kExitNumeric;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-shot camouflaged object segmentation, desk scale"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic camouflage dataset");
    std::uint64_t seed = 42;
    std::size_t count = 16, size = 64;
    std::string out_dir;
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--size", size, "image side length");
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "train adapters, alignment, query and decoder");
    std::string config_path;
    train->add_option("--config", config_path, "config file (key = value lines)")->required();

    auto* infer = app.add_subcommand("infer", "predict a mask for one image");
    std::string ckpt, image, mode = "codebook", mask_out, caption_path;
    infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer->add_option("--image", image, "input P6 image")->required();
    infer->add_option("--mode", mode, "codebook | caption");
    infer->add_option("--out", mask_out, "output P5 mask")->required();
    infer->add_option("--caption", caption_path, "caption embedding (tensor container)");

    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    std::string pred_dir, gt_dir, report_out;
    eval->add_option("--pred", pred_dir, "directory of predicted .pgm masks")->required();
    eval->add_option("--gt", gt_dir, "directory of ground-truth .pgm masks")->required();
    eval->add_option("--out", report_out, "CSV records output path");

    auto* grad = app.add_subcommand("gradcheck", "verify every derivative against finite differences");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(seed, count, size, out_dir);
        if (train->parsed()) return cmd_train(config_path);
        if (infer->parsed()) return cmd_infer(ckpt, image, mode, mask_out, caption_path);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, report_out);
        if (grad->parsed()) return cmd_gradcheck();
    } catch (const camoseg::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const camoseg::format_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFormat;
    } catch (const camoseg::dimension_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFormat;
    } catch (const camoseg::numeric_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
