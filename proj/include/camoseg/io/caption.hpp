// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "camoseg/core/rng.hpp"
#include "camoseg/core/tensor.hpp"
#include "camoseg/io/dataset.hpp"
#include "camoseg/io/tensor_io.hpp"

namespace camoseg::io {

// Stand-in for the offline captioning model. File mode loads precomputed
// embeddings ("<id>.cap.mft" tensor containers), so externally produced
// caption embeddings can be plugged in unchanged. Synthetic mode derives a
// deterministic embedding from mask-region statistics.
class CaptionProvider {
public:
    enum class Mode { file, synthetic };

    Mode mode = Mode::synthetic;
    std::string prompt = "Describe the image."; // recorded metadata only
    std::string caption_dir;                    // file mode
    std::size_t L_t = 16, d_t = 48;
    std::uint64_t seed = 0;

    mutable std::size_t calls = 0; // instrumentation

    Tensor embed(const ImageSample& sample) const {
        ++calls;
        if (mode == Mode::file) return load_file(sample.id);
        return synthesize(sample);
    }

private:
    Tensor load_file(const std::string& id) const {
        namespace fs = std::filesystem;
        std::string path = (fs::path(caption_dir) / (id + ".cap.mft")).string();
        Tensor t = read_tensor(path);
        if (t.shape != Shape{L_t, d_t})
            throw format_error(path + ": caption embedding is " + shape_str(t.shape) +
                               ", expected [" + std::to_string(L_t) + "x" + std::to_string(d_t) + "]");
        return t;
    }

    // Mask statistics (centroid, area, bounding box, mean colors), each routed
    // to a hashed token slot with gaussian smoothing along the token axis and
    // a pseudo-random channel direction. Centered so no common component
    // dominates the cosine between different samples.
    Tensor synthesize(const ImageSample& sample) const {
        const Tensor& m = sample.mask;
        const Tensor& img = sample.image;
        std::size_t h = m.shape[0], w = m.shape[1];
        double area = 0, cy = 0, cx = 0;
        double y0 = static_cast<double>(h), x0 = static_cast<double>(w), y1 = 0, x1 = 0;
        double fg_col[3] = {0, 0, 0}, bg_col[3] = {0, 0, 0};
        double bg_n = 0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (m.at(y, x) > 0.5) {
                    area += 1;
                    cy += static_cast<double>(y);
                    cx += static_cast<double>(x);
                    y0 = std::min(y0, static_cast<double>(y));
                    x0 = std::min(x0, static_cast<double>(x));
                    y1 = std::max(y1, static_cast<double>(y));
                    x1 = std::max(x1, static_cast<double>(x));
                    for (std::size_t c = 0; c < 3; ++c) fg_col[c] += img.at(y, x, c);
                } else {
                    bg_n += 1;
                    for (std::size_t c = 0; c < 3; ++c) bg_col[c] += img.at(y, x, c);
                }
            }
        std::vector<double> f;
        if (area > 0) {
            f = {cy / area / h - 0.5,
                 cx / area / w - 0.5,
                 area / static_cast<double>(h * w) - 0.2,
                 y0 / h - 0.3,
                 x0 / w - 0.3,
                 y1 / h - 0.7,
                 x1 / w - 0.7,
                 fg_col[0] / area - 0.5,
                 fg_col[1] / area - 0.5,
                 fg_col[2] / area - 0.5};
        } else {
            f.assign(10, -0.25);
        }
        if (bg_n > 0)
            for (std::size_t c = 0; c < 3; ++c) f.push_back(bg_col[c] / bg_n - 0.5);
        else
            f.insert(f.end(), {0.0, 0.0, 0.0});

        Tensor e({L_t, d_t});
        constexpr double tok_sigma = 1.5;
        for (std::size_t k = 0; k < f.size(); ++k) {
            std::size_t center = hash_combine(hash_combine(seed, 0xca11), k) % L_t;
            Rng dir(hash_combine(hash_combine(seed, 0xd120), k));
            std::vector<double> r(d_t);
            for (double& v : r) v = dir.normal();
            for (std::size_t i = 0; i < L_t; ++i) {
                double di = static_cast<double>(i) - static_cast<double>(center);
                double wgt = std::exp(-di * di / (2.0 * tok_sigma * tok_sigma));
                for (std::size_t j = 0; j < d_t; ++j) e.at(i, j) += f[k] * wgt * r[j];
            }
        }
        double fn = 0;
        for (double v : e.data) fn += v * v;
        fn = std::sqrt(fn);

        // a second sample-specific field keyed by the quantized statistics:
        // any difference in the stats flips it to a fresh direction, so two
        // different masks never produce near-identical embeddings
        std::uint64_t qh = hash_combine(seed, 0x9a57);
        for (double fk : f)
            qh = hash_combine(qh, static_cast<std::uint64_t>(
                                      static_cast<std::int64_t>(std::llround(fk * 12.0)) + 4096));
        Rng qrng(qh);
        Tensor hashed({L_t, d_t});
        double hn = 0;
        for (double& v : hashed.data) {
            v = qrng.normal();
            hn += v * v;
        }
        hn = std::sqrt(hn);

        // shared base plus a smaller sample-specific part: embeddings of
        // related scenes are strongly correlated, never identical
        Rng base_rng(hash_combine(seed, 0xba5e));
        Tensor base({L_t, d_t});
        double bn = 0;
        for (double& v : base.data) {
            v = base_rng.normal();
            bn += v * v;
        }
        bn = std::sqrt(bn);
        constexpr double distinct_weight = 0.15;
        for (std::size_t i = 0; i < e.data.size(); ++i) {
            double smooth = fn > 1e-12 ? e.data[i] / fn : 0.0;
            double part = (2.0 * hashed.data[i] / hn + smooth) / 2.2360679774997896;
            e.data[i] = base.data[i] / bn + distinct_weight * part;
        }

        // fixed RMS so caption and query magnitudes start comparable
        double norm = 0;
        for (double v : e.data) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 1e-12) {
            double scale = 0.02 * std::sqrt(static_cast<double>(e.numel())) / norm;
            for (double& v : e.data) v *= scale;
        }
        return e;
    }
};

} // namespace camoseg::io
