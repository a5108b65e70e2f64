// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "camoseg/core/error.hpp"
#include "camoseg/core/tensor.hpp"

namespace camoseg::metrics {

constexpr double kEps = DBL_EPSILON;

inline void require_pair(const Tensor& p, const Tensor& g, const char* who) {
    p.require_rank(2, who);
    g.require_rank(2, who);
    if (!p.same_shape(g))
        throw dimension_error(std::string(who) + ": prediction " + shape_str(p.shape) +
                              " vs ground truth " + shape_str(g.shape));
}

// mean absolute error
inline double mae(const Tensor& p, const Tensor& g) {
    require_pair(p, g, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) acc += std::fabs(p.data[i] - g.data[i]);
    return acc / static_cast<double>(p.numel());
}

inline double iou(const Tensor& p, const Tensor& g, double threshold = 0.5) {
    require_pair(p, g, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        bool bp = p.data[i] >= threshold;
        bool bg = g.data[i] >= 0.5;
        inter += (bp && bg);
        uni += (bp || bg);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// For every pixel: squared euclidean distance to the nearest foreground pixel
// and that pixel's row-major index. Ties go to the smallest index. Expanding
// ring search over per-row sorted column lists.
inline void nearest_foreground(const Tensor& g, std::vector<double>& dist2,
                               std::vector<std::size_t>& idx) {
    std::size_t h = g.shape[0], w = g.shape[1];
    std::vector<std::vector<long>> cols(h);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            if (g.data[r * w + c] >= 0.5) cols[r].push_back(static_cast<long>(c));

    dist2.assign(h * w, std::numeric_limits<double>::infinity());
    idx.assign(h * w, 0);

    auto scan_row = [&](long r, long c, long row, double& best, std::size_t& bidx) {
        if (row < 0 || row >= static_cast<long>(h) || cols[row].empty()) return;
        double dr2 = static_cast<double>((r - row) * (r - row));
        if (dr2 > best) return;
        const auto& cl = cols[row];
        auto it = std::lower_bound(cl.begin(), cl.end(), c);
        auto consider = [&](long cc) {
            double d2 = dr2 + static_cast<double>((c - cc) * (c - cc));
            if (d2 > best) return false;
            std::size_t lin = static_cast<std::size_t>(row) * w + static_cast<std::size_t>(cc);
            if (d2 < best || lin < bidx) {
                best = d2;
                bidx = lin;
            }
            return true;
        };
        for (auto l = it; l != cl.begin();) {
            --l;
            if (!consider(*l)) break;
        }
        for (auto rgt = it; rgt != cl.end(); ++rgt)
            if (!consider(*rgt)) break;
    };

    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            std::size_t lin = r * w + c;
            if (g.data[lin] >= 0.5) {
                dist2[lin] = 0.0;
                idx[lin] = lin;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            std::size_t bidx = 0;
            for (long dr = 0;; ++dr) {
                double dr2 = static_cast<double>(dr) * static_cast<double>(dr);
                if (dr2 > best) break;
                scan_row(static_cast<long>(r), static_cast<long>(c), static_cast<long>(r) - dr,
                         best, bidx);
                if (dr > 0)
                    scan_row(static_cast<long>(r), static_cast<long>(c), static_cast<long>(r) + dr,
                             best, bidx);
                if (dr > static_cast<long>(h)) break;
            }
            dist2[lin] = best;
            idx[lin] = bidx;
        }
    }
}

// 7x7 gaussian (sigma 5), normalized, correlated with zero padding.
inline std::vector<double> gauss7_filter(const std::vector<double>& src, std::size_t h, std::size_t w) {
    static const auto kernel = [] {
        std::array<double, 49> k{};
        double s = 0.0;
        for (int u = -3; u <= 3; ++u)
            for (int v = -3; v <= 3; ++v) {
                double val = std::exp(-(u * u + v * v) / 50.0);
                k[(u + 3) * 7 + (v + 3)] = val;
                s += val;
            }
        for (double& v : k) v /= s;
        return k;
    }();
    std::vector<double> out(h * w, 0.0);
    for (long r = 0; r < static_cast<long>(h); ++r)
        for (long c = 0; c < static_cast<long>(w); ++c) {
            double acc = 0.0;
            for (int u = -3; u <= 3; ++u) {
                long rr = r + u;
                if (rr < 0 || rr >= static_cast<long>(h)) continue;
                for (int v = -3; v <= 3; ++v) {
                    long cc = c + v;
                    if (cc < 0 || cc >= static_cast<long>(w)) continue;
                    acc += kernel[(u + 3) * 7 + (v + 3)] * src[rr * w + cc];
                }
            }
            out[r * w + c] = acc;
        }
    return out;
}

} // namespace detail

// Weighted F-measure, beta^2 = 1. Errors at background pixels borrow the
// error of the nearest foreground pixel; a 7x7 gaussian (sigma 5) spreads
// foreground errors; background importance decays as 2 - exp(ln(0.5)/5 * D).
inline double weighted_f_beta(const Tensor& p, const Tensor& g) {
    require_pair(p, g, "weighted_f_beta");
    std::size_t h = p.shape[0], w = p.shape[1], n = h * w;
    double gt_sum = 0.0;
    for (double v : g.data) gt_sum += (v >= 0.5) ? 1.0 : 0.0;
    if (gt_sum == 0.0) {
        std::cerr << "warning: weighted_f_beta on empty ground truth, returning 0\n";
        return 0.0;
    }

    std::vector<double> E(n);
    for (std::size_t i = 0; i < n; ++i) {
        double gi = g.data[i] >= 0.5 ? 1.0 : 0.0;
        E[i] = std::fabs(p.data[i] - gi);
    }

    std::vector<double> dist2;
    std::vector<std::size_t> nearest;
    detail::nearest_foreground(g, dist2, nearest);

    std::vector<double> Et = E;
    for (std::size_t i = 0; i < n; ++i)
        if (g.data[i] < 0.5) Et[i] = E[nearest[i]];

    std::vector<double> EA = detail::gauss7_filter(Et, h, w);

    constexpr double decay = -0.13862943611198906; // ln(0.5) / 5
    double sum_ew_fg = 0.0, sum_ew_bg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        bool fg = g.data[i] >= 0.5;
        double min_e_ea = (fg && EA[i] < E[i]) ? EA[i] : E[i];
        double B = fg ? 1.0 : 2.0 - std::exp(decay * std::sqrt(dist2[i]));
        double ew = min_e_ea * B;
        (fg ? sum_ew_fg : sum_ew_bg) += ew;
    }

    double tpw = gt_sum - sum_ew_fg;
    double fpw = sum_ew_bg;
    double recall = 1.0 - sum_ew_fg / gt_sum;
    double precision = tpw / (kEps + tpw + fpw);
    return 2.0 * precision * recall / (kEps + precision + recall);
}

namespace detail {

struct Region {
    // half-open pixel rectangle [r0, r1) x [c0, c1)
    std::size_t r0, r1, c0, c1;
    std::size_t count() const { return (r1 - r0) * (c1 - c0); }
};

inline double region_mean(const Tensor& t, const Region& r) {
    if (r.count() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = r.r0; i < r.r1; ++i)
        for (std::size_t j = r.c0; j < r.c1; ++j) acc += t.at(i, j);
    return acc / static_cast<double>(r.count());
}

// Region similarity used by the structure measure (not full SSIM).
inline double region_ssim(const Tensor& p, const Tensor& g, const Region& r) {
    std::size_t n = r.count();
    if (n == 0) return 0.0;
    double x = region_mean(p, r), y = region_mean(g, r);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = r.r0; i < r.r1; ++i)
        for (std::size_t j = r.c0; j < r.c1; ++j) {
            double dp = p.at(i, j) - x, dg = g.at(i, j) - y;
            sx += dp * dp;
            sy += dg * dg;
            sxy += dp * dg;
        }
    double nm1 = static_cast<double>(n) - 1.0 + kEps;
    sx /= nm1;
    sy /= nm1;
    sxy /= nm1;
    double alpha = 4.0 * x * y * sxy;
    double beta = (x * x + y * y) * (sx + sy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    return beta == 0.0 ? 1.0 : 0.0;
}

inline double object_score(const Tensor& p, const Tensor& g, bool want_fg) {
    // mean/std of the (masked) prediction over the selected region
    double sum = 0.0;
    std::size_t cnt = 0;
    std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
        bool fg = g.data[i] >= 0.5;
        if (fg != want_fg) continue;
        double v = want_fg ? p.data[i] : 1.0 - p.data[i];
        sum += v;
        ++cnt;
    }
    if (cnt == 0) return 0.0;
    double x = sum / static_cast<double>(cnt);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        bool fg = g.data[i] >= 0.5;
        if (fg != want_fg) continue;
        double v = (want_fg ? p.data[i] : 1.0 - p.data[i]) - x;
        var += v * v;
    }
    double sigma = cnt > 1 ? std::sqrt(var / (static_cast<double>(cnt) - 1.0)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

inline double s_object(const Tensor& p, const Tensor& g) {
    double u = 0.0;
    for (double v : g.data) u += (v >= 0.5) ? 1.0 : 0.0;
    u /= static_cast<double>(g.numel());
    return u * object_score(p, g, true) + (1.0 - u) * object_score(p, g, false);
}

inline double s_region(const Tensor& p, const Tensor& g) {
    std::size_t rows = g.shape[0], cols = g.shape[1];
    double total = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (g.at(i, j) >= 0.5) {
                total += 1.0;
                cy += static_cast<double>(i + 1);
                cx += static_cast<double>(j + 1);
            }
    std::size_t X, Y; // 1-based centroid
    if (total == 0.0) {
        X = (cols + 1) / 2;
        Y = (rows + 1) / 2;
    } else {
        X = static_cast<std::size_t>(std::llround(cx / total));
        Y = static_cast<std::size_t>(std::llround(cy / total));
    }
    Region lt{0, Y, 0, X}, rt{0, Y, X, cols}, lb{Y, rows, 0, X}, rb{Y, rows, X, cols};
    double area = static_cast<double>(rows * cols);
    double w1 = static_cast<double>(X * Y) / area;
    double w2 = static_cast<double>((cols - X) * Y) / area;
    double w3 = static_cast<double>(X * (rows - Y)) / area;
    double w4 = 1.0 - w1 - w2 - w3;
    return w1 * region_ssim(p, g, lt) + w2 * region_ssim(p, g, rt) + w3 * region_ssim(p, g, lb) +
           w4 * region_ssim(p, g, rb);
}

} // namespace detail

// Structure measure, alpha = 0.5. Empty ground truth scores the emptiness of
// the prediction; full ground truth scores its mean.
inline double s_measure(const Tensor& p, const Tensor& g) {
    require_pair(p, g, "s_measure");
    double y = 0.0;
    for (double v : g.data) y += (v >= 0.5) ? 1.0 : 0.0;
    y /= static_cast<double>(g.numel());
    double x = 0.0;
    for (double v : p.data) x += v;
    x /= static_cast<double>(p.numel());
    if (y == 0.0) return 1.0 - x;
    if (y == 1.0) return x;
    constexpr double alpha = 0.5;
    double q = alpha * detail::s_object(p, g) + (1.0 - alpha) * detail::s_region(p, g);
    return std::max(q, 0.0);
}

// Enhanced-alignment measure for one binary prediction.
inline double e_measure_binary(const std::vector<double>& fm, const Tensor& g) {
    std::size_t n = g.numel();
    double gsum = 0.0;
    for (double v : g.data) gsum += (v >= 0.5) ? 1.0 : 0.0;
    double enhanced_sum = 0.0;
    if (gsum == 0.0) {
        for (std::size_t i = 0; i < n; ++i) enhanced_sum += 1.0 - fm[i];
    } else if (gsum == static_cast<double>(n)) {
        for (std::size_t i = 0; i < n; ++i) enhanced_sum += fm[i];
    } else {
        double mu_f = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu_f += fm[i];
        mu_f /= static_cast<double>(n);
        double mu_g = gsum / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            double af = fm[i] - mu_f;
            double ag = (g.data[i] >= 0.5 ? 1.0 : 0.0) - mu_g;
            double align = 2.0 * af * ag / (af * af + ag * ag + kEps);
            double e = (align + 1.0) * (align + 1.0) / 4.0;
            enhanced_sum += e;
        }
    }
    return enhanced_sum / static_cast<double>(n);
}

// Mean enhanced-alignment measure: the prediction is binarized at the 256
// 8-bit bin midpoints (k + 0.5)/256, k = 0..255, and the per-threshold scores
// are averaged.
inline double e_measure(const Tensor& p, const Tensor& g) {
    require_pair(p, g, "e_measure");
    std::size_t n = p.numel();
    std::vector<double> fm(n);
    double acc = 0.0;
    for (int k = 0; k < 256; ++k) {
        double tau = (static_cast<double>(k) + 0.5) / 256.0;
        for (std::size_t i = 0; i < n; ++i) fm[i] = p.data[i] >= tau ? 1.0 : 0.0;
        acc += e_measure_binary(fm, g);
    }
    return acc / 256.0;
}

// Per-image scores for the four standard measures plus IoU at 0.5.
struct ImageScores {
    std::string id;
    double fwb = 0, mae = 0, s = 0, e = 0, iou = 0;
};

struct EvalReport {
    std::vector<ImageScores> images;
    ImageScores mean; // id == "MEAN"
};

// Community convention for maps derived from logits: min-max normalize the
// prediction per image before scoring.
inline Tensor normalize_prediction(const Tensor& p) {
    Tensor out = p;
    double lo = out.data[0], hi = out.data[0];
    for (double v : out.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo)
        for (double& v : out.data) v = (v - lo) / (hi - lo);
    return out;
}

inline ImageScores score_image(const std::string& id, const Tensor& pred, const Tensor& gt) {
    ImageScores s;
    s.id = id;
    s.fwb = weighted_f_beta(pred, gt);
    s.mae = mae(pred, gt);
    s.s = s_measure(pred, gt);
    s.e = e_measure(pred, gt);
    s.iou = iou(pred, gt);
    return s;
}

inline EvalReport make_report(std::vector<ImageScores> images) {
    EvalReport rep;
    rep.mean.id = "MEAN";
    for (const auto& s : images) {
        rep.mean.fwb += s.fwb;
        rep.mean.mae += s.mae;
        rep.mean.s += s.s;
        rep.mean.e += s.e;
        rep.mean.iou += s.iou;
    }
    if (!images.empty()) {
        double n = static_cast<double>(images.size());
        rep.mean.fwb /= n;
        rep.mean.mae /= n;
        rep.mean.s /= n;
        rep.mean.e /= n;
        rep.mean.iou /= n;
    }
    rep.images = std::move(images);
    return rep;
}

} // namespace camoseg::metrics
