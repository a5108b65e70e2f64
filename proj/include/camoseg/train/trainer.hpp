// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdio>
#include <iostream>
#include <thread>
#include <numeric>
#include <string>
#include <vector>

#include "camoseg/io/caption.hpp"
#include "camoseg/io/checkpoint.hpp"
#include "camoseg/io/dataset.hpp"
#include "camoseg/model/network.hpp"
#include "camoseg/train/adamw.hpp"
#include "camoseg/train/config.hpp"
#include "camoseg/train/schedule.hpp"

namespace camoseg {

// Single-threaded training loop. Every stochastic choice (epoch order, flips)
// is a pure function of (seed, step), so runs are bitwise reproducible and a
// serialized state resumes the uninterrupted trajectory exactly.
class Trainer {
public:
    Trainer(Network& net, const RunConfig& cfg, std::vector<io::ImageSample> samples,
            const io::CaptionProvider& provider, std::ostream& log = std::cout)
        : net_(net), cfg_(cfg), samples_(std::move(samples)), provider_(provider),
          opt_(net.store()), log_(&log) {
        cfg_.validate();
        if (samples_.empty()) throw config_error("trainer: empty dataset");
        opt_.weight_decay = cfg_.weight_decay;
        if (cfg_.mixer_lr_scale != 1.0) opt_.set_lr_scale("mfa.mixer.", cfg_.mixer_lr_scale);
        if (cfg_.adapter_lr_scale != 1.0) opt_.set_lr_scale("encoder.adapter", cfg_.adapter_lr_scale);
        if (cfg_.decoder_lr_scale != 1.0) opt_.set_lr_scale("decoder.", cfg_.decoder_lr_scale);
        captions_.reserve(samples_.size());
        for (const auto& s : samples_) captions_.push_back(provider_.embed(s));

        steps_per_epoch_ = (samples_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
        total_steps_ = cfg_.effective_epochs() * steps_per_epoch_;
        if (cfg_.max_steps > 0 && cfg_.max_steps < total_steps_) total_steps_ = cfg_.max_steps;
        warmup_steps_ = cfg_.warmup_steps ? cfg_.warmup_steps
                                          : cfg_.effective_warmup_epochs() * steps_per_epoch_;
        if (warmup_steps_ >= total_steps_ && total_steps_ > 1) warmup_steps_ = total_steps_ / 4;

        // the cosine query loss is scale-free, so the codebook's magnitude is
        // a free direction; keep it on the caption-magnitude sphere and let
        // the loss steer only its direction
        double acc = 0.0;
        for (const Tensor& c : captions_) {
            double s = 0.0;
            for (double v : c.data) s += v * v;
            acc += std::sqrt(s / static_cast<double>(c.numel()));
        }
        caption_rms_ = acc / static_cast<double>(captions_.size());
    }

    std::size_t total_steps() const { return total_steps_; }
    std::size_t step() const { return step_; }

    // One optimizer step over the next batch. Batch elements may be evaluated
    // on worker threads; gradients are accumulated in element order afterward,
    // so the result is bit-identical for any worker count. Returns the
    // batch-mean loss.
    LossBreakdown train_step() {
        LossWeights w = cfg_.loss_weights();
        double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);

        std::vector<Workspace> spaces(cfg_.batch_size);
        std::vector<LossBreakdown> parts(cfg_.batch_size);
        std::vector<std::string> failures(cfg_.batch_size);

        // the plan is materialized sequentially; workers only read it
        std::vector<std::pair<std::size_t, bool>> plan(cfg_.batch_size);
        for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
            std::size_t pos = step_ * cfg_.batch_size + b;
            plan[b] = {sample_at(pos),
                       cfg_.augment && (hash_combine(hash_str(cfg_.seed, "flip"), pos) & 1ull) != 0};
        }

        auto run_element = [&](std::size_t b) {
            try {
                auto [si, flip] = plan[b];
                Tensor image = flip ? flip_h(samples_[si].image) : samples_[si].image;
                Tensor mask = flip ? flip_h(samples_[si].mask) : samples_[si].mask;

                Network::TrainForward f = net_.forward_train(spaces[b], image, captions_[si]);
                TotalLoss loss = losses::total_loss(f.probs, mask, f.I, f.Q, w);
                if (!std::isfinite(loss.parts.total))
                    throw numeric_error("train: non-finite loss at step " + std::to_string(step_));
                backward(loss.total);
                parts[b] = loss.parts;
            } catch (const std::exception& e) {
                failures[b] = e.what();
            }
        };

        std::size_t workers = std::max<std::size_t>(1, cfg_.threads);
        if (workers <= 1) {
            for (std::size_t b = 0; b < cfg_.batch_size; ++b) run_element(b);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < workers; ++t)
                pool.emplace_back([&] {
                    for (std::size_t b = next.fetch_add(1); b < cfg_.batch_size;
                         b = next.fetch_add(1))
                        run_element(b);
                });
            for (auto& t : pool) t.join();
        }
        for (const std::string& f : failures)
            if (!f.empty()) throw numeric_error(f);

        LossBreakdown acc;
        for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
            spaces[b].accumulate_grads(inv_b);
            acc.bce += parts[b].bce * inv_b;
            acc.dice += parts[b].dice * inv_b;
            acc.ual += parts[b].ual * inv_b;
            acc.q += parts[b].q * inv_b;
            acc.total += parts[b].total * inv_b;
        }
        opt_.step(lr_at(step_, total_steps_, warmup_steps_, cfg_.lr));
        project_query_norm();
        ++step_;
        return acc;
    }

    void project_query_norm() {
        if (caption_rms_ <= 0.0) return;
        Tensor& q = net_.mfa().query_param().tensor;
        double s = 0.0;
        for (double v : q.data) s += v * v;
        double rms = std::sqrt(s / static_cast<double>(q.numel()));
        if (rms > 1e-12) {
            double scale = caption_rms_ / rms;
            for (double& v : q.data) v *= scale;
        }
    }

    // Clean full-set BCE (no augmentation), used for reporting and early stop.
    double full_set_bce() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            Tensor probs = net_.infer_probs(samples_[i].image, Network::InferMode::caption,
                                            &captions_[i]);
            Var p(probs, false);
            acc += losses::bce(p, samples_[i].mask).value().item();
        }
        return acc / static_cast<double>(samples_.size());
    }

    // Runs to the step budget (or the early-stop target), logging one line per
    // step and checkpointing every cfg.checkpoint_every steps and at the end.
    void run() {
        while (step_ < total_steps_) {
            LossBreakdown l = train_step();
            if (cfg_.log_every && step_ % cfg_.log_every == 0) log_line(step_ - 1, l);
            if (cfg_.checkpoint_every && step_ % cfg_.checkpoint_every == 0 && step_ < total_steps_)
                io::save_checkpoint(cfg_.checkpoint_out, net_.store());
            if (cfg_.stop_bce > 0.0 && step_ % 20 == 0 && full_set_bce() <= cfg_.stop_bce) {
                *log_ << "# early stop at step " << step_ << ": full-set bce below "
                      << cfg_.stop_bce << "\n";
                break;
            }
        }
        io::save_checkpoint(cfg_.checkpoint_out, net_.store());
    }

    // ---- serializable state ---------------------------------------------

    // The parameters, the optimizer moments, and the step counter fully
    // determine the remaining trajectory (all randomness is counter-based).
    void save_state(const std::string& path) const {
        std::vector<io::CheckpointEntry> entries;
        for (const auto& p : net_.store().all()) entries.push_back({p->name, p->trainable, p->tensor});
        for (const auto& p : net_.store().all()) {
            if (!p->trainable) continue;
            AdamW::Moments* mo = const_cast<AdamW&>(opt_).moments_of(p.get());
            entries.push_back({"__adam.m." + p->name, false, mo->m});
            entries.push_back({"__adam.v." + p->name, false, mo->v});
        }
        entries.push_back({"__state.step", false,
                           Tensor({1}, {static_cast<double>(step_)})});
        entries.push_back({"__state.opt_steps", false,
                           Tensor({1}, {static_cast<double>(opt_.step_count())})});
        io::detail::spill(path, io::encode_checkpoint(entries));
    }

    void load_state(const std::string& path) {
        auto entries = io::read_checkpoint(path);
        for (const auto& e : entries) {
            if (e.name == "__state.step") {
                step_ = static_cast<std::size_t>(e.tensor.item());
            } else if (e.name == "__state.opt_steps") {
                opt_.set_step_count(static_cast<std::size_t>(e.tensor.item()));
            } else if (e.name.rfind("__adam.m.", 0) == 0) {
                Parameter* p = net_.store().find(e.name.substr(9));
                if (!p) throw format_error(path + ": moment for unknown parameter '" + e.name + "'");
                opt_.moments_of(p)->m = e.tensor;
            } else if (e.name.rfind("__adam.v.", 0) == 0) {
                Parameter* p = net_.store().find(e.name.substr(9));
                if (!p) throw format_error(path + ": moment for unknown parameter '" + e.name + "'");
                opt_.moments_of(p)->v = e.tensor;
            } else {
                Parameter* p = net_.store().find(e.name);
                if (!p) throw format_error(path + ": unknown parameter '" + e.name + "'");
                p->tensor = e.tensor;
            }
        }
    }

private:
    std::size_t sample_at(std::size_t pos) const {
        std::size_t n = samples_.size();
        std::size_t epoch = pos / n;
        if (epoch != cached_epoch_ || order_.empty()) {
            order_.resize(n);
            std::iota(order_.begin(), order_.end(), 0);
            Rng rng(hash_combine(hash_str(cfg_.seed, "order"), epoch));
            for (std::size_t i = n; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
            cached_epoch_ = epoch;
        }
        return order_[pos % n];
    }

    static Tensor flip_h(const Tensor& t) {
        Tensor out = t;
        std::size_t h = t.shape[0], w = t.shape[1];
        if (t.rank() == 2) {
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) out.at(y, x) = t.at(y, w - 1 - x);
        } else {
            std::size_t c = t.shape[2];
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = t.at(y, w - 1 - x, ch);
        }
        return out;
    }

    void log_line(std::size_t step, const LossBreakdown& l) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "step %zu bce %.6f dice %.6f ual %.6f q %.6f total %.6f", step, l.bce,
                      l.dice, l.ual, l.q, l.total);
        *log_ << buf << "\n";
    }

    Network& net_;
    RunConfig cfg_;
    std::vector<io::ImageSample> samples_;
    const io::CaptionProvider& provider_;
    std::vector<Tensor> captions_;
    AdamW opt_;
    std::ostream* log_;
    std::size_t steps_per_epoch_ = 1, total_steps_ = 1, warmup_steps_ = 0, step_ = 0;
    double caption_rms_ = 0.0;
    mutable std::vector<std::size_t> order_;
    mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
};

} // namespace camoseg
