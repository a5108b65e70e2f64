// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "camoseg/core/ops.hpp"
#include "camoseg/core/rng.hpp"
#include "camoseg/io/netpbm.hpp"

namespace camoseg::io {

struct ImageSample {
    std::string id;
    Tensor image; // [h, w, 3] in [0, 1]
    Tensor mask;  // [h, w] strictly {0, 1}
};

namespace detail {

// Low-frequency noise: coarse gaussian grid bilinearly upsampled, mapped into
// [0.2, 0.8] so the later +-0.15 perturbation never clips.
inline Tensor noise_texture(std::size_t size, Rng& rng) {
    std::size_t coarse = std::max<std::size_t>(4, size / 8);
    Tensor grid({coarse, coarse, 3});
    for (double& v : grid.data) v = 0.5 + 0.15 * std::clamp(rng.normal(), -2.0, 2.0);
    Var up = ops::resize_bilinear(Var(grid, false), size, size);
    return up.value();
}

struct Ellipse {
    double cy, cx, ry, rx, theta;

    bool contains(double y, double x) const {
        double dy = y - cy, dx = x - cx;
        double c = std::cos(theta), s = std::sin(theta);
        double u = (c * dx + s * dy) / rx;
        double v = (-s * dx + c * dy) / ry;
        return u * u + v * v <= 1.0;
    }
};

inline Tensor blob_mask(std::size_t size, Rng& rng) {
    std::size_t n = 1 + rng.below(3);
    std::vector<Ellipse> blobs;
    double fsize = static_cast<double>(size);
    for (std::size_t i = 0; i < n; ++i) {
        Ellipse e;
        e.cy = rng.uniform(0.32, 0.68) * fsize;
        e.cx = rng.uniform(0.32, 0.68) * fsize;
        e.ry = rng.uniform(0.10, 0.24) * fsize;
        e.rx = rng.uniform(0.10, 0.24) * fsize;
        e.theta = rng.uniform(0.0, 3.14159265358979);
        blobs.push_back(e);
    }
    Tensor mask({size, size});
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (const Ellipse& e : blobs)
                if (e.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) {
                    mask.at(y, x) = 1.0;
                    break;
                }
    return mask;
}

} // namespace detail

// Foreground/background contrast amplitude as a fraction of the dynamic range.
constexpr double kCamouflageDelta = 0.15;

inline ImageSample synth_sample(std::uint64_t seed, std::size_t index, std::size_t size) {
    std::uint64_t sample_seed = hash_combine(seed, index);

    // redraw until the blob covers 5..40% of the frame
    Tensor mask;
    double area = 0.0;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(hash_combine(sample_seed, 0x10000 + attempt));
        mask = detail::blob_mask(size, rng);
        double fg = 0.0;
        for (double v : mask.data) fg += v;
        area = fg / static_cast<double>(mask.numel());
        if (area >= 0.05 && area <= 0.40) break;
        if (attempt > 200) throw numeric_error("synth_sample: cannot satisfy area constraint");
    }

    Rng bg_rng(hash_combine(sample_seed, 1));
    Rng fg_rng(hash_combine(sample_seed, 2));
    Tensor bg = detail::noise_texture(size, bg_rng);
    Tensor fg = detail::noise_texture(size, fg_rng);

    Tensor image = bg;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            if (mask.at(y, x) > 0.5)
                for (std::size_t c = 0; c < 3; ++c)
                    image.at(y, x, c) = bg.at(y, x, c) +
                                        kCamouflageDelta * (fg.at(y, x, c) - bg.at(y, x, c));

    ImageSample s;
    s.image = std::move(image);
    s.mask = std::move(mask);
    return s;
}

inline std::string sample_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04zu", index);
    return buf;
}

// Writes images/<id>.ppm, masks/<id>.pgm and manifest.txt (one id per line).
// A pure function of (seed, count, size).
inline void synth_generate(std::uint64_t seed, std::size_t count, std::size_t size,
                           const std::string& out_dir) {
    if (count < 1) throw config_error("synth_generate: count must be >= 1");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    std::ofstream manifest(fs::path(out_dir) / "manifest.txt", std::ios::trunc);
    if (!manifest) throw format_error(out_dir + ": cannot write manifest.txt");
    for (std::size_t i = 0; i < count; ++i) {
        ImageSample s = synth_sample(seed, i, size);
        s.id = sample_id(i);
        write_ppm((fs::path(out_dir) / "images" / (s.id + ".ppm")).string(), s.image);
        write_pgm((fs::path(out_dir) / "masks" / (s.id + ".pgm")).string(), s.mask);
        manifest << s.id << "\n";
    }
}

inline std::vector<std::string> read_manifest(const std::string& dataset_dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dataset_dir) / "manifest.txt");
    if (!in) throw format_error(dataset_dir + ": missing manifest.txt");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

inline ImageSample load_sample(const std::string& dataset_dir, const std::string& id) {
    namespace fs = std::filesystem;
    ImageSample s;
    s.id = id;
    s.image = read_ppm((fs::path(dataset_dir) / "images" / (id + ".ppm")).string());
    s.mask = read_pgm((fs::path(dataset_dir) / "masks" / (id + ".pgm")).string());
    for (double& v : s.mask.data) v = v >= 0.5 ? 1.0 : 0.0;
    return s;
}

inline std::vector<ImageSample> load_dataset(const std::string& dataset_dir) {
    std::vector<ImageSample> out;
    for (const std::string& id : read_manifest(dataset_dir)) out.push_back(load_sample(dataset_dir, id));
    if (out.empty()) throw format_error(dataset_dir + ": empty dataset");
    return out;
}

} // namespace camoseg::io
