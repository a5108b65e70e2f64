// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "camoseg/core/autodiff.hpp"
#include "camoseg/core/error.hpp"
#include "camoseg/core/tensor.hpp"

namespace camoseg::ops {

using Node = Var::Node;

namespace detail {

inline void accumulate(const std::shared_ptr<Node>& p, const Tensor& g) {
    if (!p->requires_grad) return;
    Tensor& dst = p->ensure_grad();
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(who) + ": shape mismatch " + shape_str(a.shape) +
                              " vs " + shape_str(b.shape));
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise and scalar arithmetic

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    return Var::make(std::move(out), "add", {a, b}, [](Node& n) {
        detail::accumulate(n.parents[0], n.grad);
        detail::accumulate(n.parents[1], n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    return Var::make(std::move(out), "sub", {a, b}, [](Node& n) {
        detail::accumulate(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= n.grad.data[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    return Var::make(std::move(out), "mul", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] * bv.data[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] * av.data[i];
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "div");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.value().data[i];
    return Var::make(std::move(out), "div", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] / bv.data[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] -= n.grad.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
        }
    });
}

inline Var add_scalar(const Var& x, double c) {
    Tensor out = x.value();
    for (double& v : out.data) v += c;
    return Var::make(std::move(out), "add_scalar", {x},
                     [](Node& n) { detail::accumulate(n.parents[0], n.grad); });
}

inline Var mul_scalar(const Var& x, double c) {
    Tensor out = x.value();
    for (double& v : out.data) v *= c;
    return Var::make(std::move(out), "mul_scalar", {x}, [c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * n.grad.data[i];
    });
}

// y = s * x where s is a trainable scalar (shape [1]).
inline Var scale_by(const Var& s, const Var& x) {
    if (s.value().numel() != 1) throw dimension_error("scale_by: scale must be scalar");
    double sv = s.value().data[0];
    Tensor out = x.value();
    for (double& v : out.data) v *= sv;
    return Var::make(std::move(out), "scale_by", {s, x}, [](Node& n) {
        const Tensor& xv = n.parents[1]->value;
        double sv = n.parents[0]->value.data[0];
        if (n.parents[0]->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.data.size(); ++i) acc += n.grad.data[i] * xv.data[i];
            n.parents[0]->ensure_grad().data[0] += acc;
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += sv * n.grad.data[i];
        }
    });
}

inline Var clamp(const Var& x, double lo, double hi) {
    Tensor out = x.value();
    for (double& v : out.data) v = std::min(std::max(v, lo), hi);
    return Var::make(std::move(out), "clamp", {x}, [lo, hi](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (xv.data[i] > lo && xv.data[i] < hi) g.data[i] += n.grad.data[i];
    });
}

inline Var log(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data) v = std::log(v);
    return Var::make(std::move(out), "log", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i] / xv.data[i];
    });
}

inline Var sqrt(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data) v = std::sqrt(v);
    return Var::make(std::move(out), "sqrt", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += n.grad.data[i] * 0.5 / n.value.data[i];
    });
}

// Cuts the tape: value passes through, gradient does not.
inline Var detach(const Var& x) { return Var(x.value(), false); }

// ---------------------------------------------------------------------------
// reductions

inline Var sum(const Var& x) {
    double acc = 0.0;
    for (double v : x.value().data) acc += v;
    return Var::make(Tensor::scalar(acc), "sum", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        double up = n.grad.data[0];
        for (double& v : g.data) v += up;
    });
}

inline Var mean(const Var& x) {
    double inv = 1.0 / static_cast<double>(x.value().numel());
    double acc = 0.0;
    for (double v : x.value().data) acc += v;
    return Var::make(Tensor::scalar(acc * inv), "mean", {x}, [inv](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        double up = n.grad.data[0] * inv;
        for (double& v : g.data) v += up;
    });
}

// Frobenius inner product <a, b>.
inline Var dot(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().data.size(); ++i)
        acc += a.value().data[i] * b.value().data[i];
    return Var::make(Tensor::scalar(acc), "dot", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        double up = n.grad.data[0];
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += up * bv.data[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += up * av.data[i];
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops

inline Var reshape(const Var& x, Shape s) {
    if (shape_numel(s) != x.value().numel())
        throw dimension_error("reshape: " + shape_str(x.value().shape) + " -> " + shape_str(s) +
                              " changes element count");
    Tensor out(std::move(s), x.value().data);
    return Var::make(std::move(out), "reshape", {x},
                     [](Node& n) { detail::accumulate(n.parents[0], n.grad); });
}

inline Var transpose(const Var& x) {
    x.value().require_rank(2, "transpose");
    std::size_t m = x.value().shape[0], k = x.value().shape[1];
    Tensor out({k, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) out.data[j * m + i] = x.value().data[i * k + j];
    return Var::make(std::move(out), "transpose", {x}, [m, k](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) g.data[i * k + j] += n.grad.data[j * m + i];
    });
}

inline Var slice_cols(const Var& x, std::size_t start, std::size_t len) {
    x.value().require_rank(2, "slice_cols");
    std::size_t m = x.value().shape[0], k = x.value().shape[1];
    if (start + len > k) throw dimension_error("slice_cols: range past " + shape_str(x.value().shape));
    Tensor out({m, len});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < len; ++j) out.data[i * len + j] = x.value().data[i * k + start + j];
    return Var::make(std::move(out), "slice_cols", {x}, [m, k, start, len](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < len; ++j) g.data[i * k + start + j] += n.grad.data[i * len + j];
    });
}

inline Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw dimension_error("concat_cols: no operands");
    std::size_t m = xs[0].value().shape[0];
    std::size_t total = 0;
    for (const Var& x : xs) {
        x.value().require_rank(2, "concat_cols");
        if (x.value().shape[0] != m) throw dimension_error("concat_cols: row count mismatch");
        total += x.value().shape[1];
    }
    Tensor out({m, total});
    std::size_t off = 0;
    for (const Var& x : xs) {
        std::size_t k = x.value().shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) out.data[i * total + off + j] = x.value().data[i * k + j];
        off += k;
    }
    return Var::make(std::move(out), "concat_cols", std::vector<Var>(xs), [m, total](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            std::size_t k = p->value.shape[1];
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) g.data[i * k + j] += n.grad.data[i * total + off + j];
            }
            off += k;
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra

inline Tensor matmul_value(const Tensor& a, const Tensor& b) {
    a.require_rank(2, "matmul");
    b.require_rank(2, "matmul");
    std::size_t m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    if (k != k2)
        throw dimension_error("matmul: inner dims differ, " + shape_str(a.shape) + " x " +
                              shape_str(b.shape));
    Tensor out({m, n});
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out.data.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return out;
}

// dA = dC * B^T, dB = A^T * dC
inline Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul_value(a.value(), b.value());
    return Var::make(std::move(out), "matmul", {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        std::size_t m = av.shape[0], k = av.shape[1], c = bv.shape[1];
        if (n.parents[0]->requires_grad) {
            Tensor& ga = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    double d = n.grad.data[i * c + j];
                    if (d == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) ga.data[i * k + p] += d * bv.data[p * c + j];
                }
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gb = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double av_ip = av.data[i * k + p];
                    if (av_ip == 0.0) continue;
                    for (std::size_t j = 0; j < c; ++j)
                        gb.data[p * c + j] += av_ip * n.grad.data[i * c + j];
                }
        }
    });
}

// x[m,n] + b[n] broadcast over rows.
inline Var row_add(const Var& x, const Var& b) {
    x.value().require_rank(2, "row_add");
    b.value().require_rank(1, "row_add");
    std::size_t m = x.value().shape[0], n = x.value().shape[1];
    if (b.value().shape[0] != n)
        throw dimension_error("row_add: bias " + shape_str(b.value().shape) + " vs cols " +
                              std::to_string(n));
    Tensor out = x.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += b.value().data[j];
    return Var::make(std::move(out), "row_add", {x, b}, [m, n](Node& n_) {
        detail::accumulate(n_.parents[0], n_.grad);
        if (n_.parents[1]->requires_grad) {
            Tensor& g = n_.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g.data[j] += n_.grad.data[i * n + j];
        }
    });
}

// Fused x*W + b. One kernel, one adjoint; the composition matmul+row_add is
// kept as the independent route for tests.
inline Var linear(const Var& x, const Var& W, const Var& b) {
    Tensor out = matmul_value(x.value(), W.value());
    std::size_t m = out.shape[0], n = out.shape[1];
    if (b.value().rank() != 1 || b.value().shape[0] != n)
        throw dimension_error("linear: bias " + shape_str(b.value().shape) + " vs out cols " +
                              std::to_string(n));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += b.value().data[j];
    return Var::make(std::move(out), "linear", {x, W, b}, [](Node& node) {
        const Tensor& xv = node.parents[0]->value;
        const Tensor& Wv = node.parents[1]->value;
        std::size_t m = xv.shape[0], k = xv.shape[1], n = Wv.shape[1];
        if (node.parents[0]->requires_grad) {
            Tensor& g = node.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double d = node.grad.data[i * n + j];
                    if (d == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) g.data[i * k + p] += d * Wv.data[p * n + j];
                }
        }
        if (node.parents[1]->requires_grad) {
            Tensor& g = node.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double xv_ip = xv.data[i * k + p];
                    if (xv_ip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        g.data[p * n + j] += xv_ip * node.grad.data[i * n + j];
                }
        }
        if (node.parents[2]->requires_grad) {
            Tensor& g = node.parents[2]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g.data[j] += node.grad.data[i * n + j];
        }
    });
}

// ---------------------------------------------------------------------------
// row-wise normalizations

// Stabilized by row-max subtraction. dx = y .* (dy - sum_j dy_j y_j) per row.
inline Var softmax_rows(const Var& x) {
    x.value().require_rank(2, "softmax_rows");
    if (checked_mode()) x.value().require_finite("softmax_rows input");
    std::size_t m = x.value().shape[0], n = x.value().shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.value().data.data() + i * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(xi[j] - mx);
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = std::exp(xi[j] - mx) / denom;
    }
    return Var::make(std::move(out), "softmax_rows", {x}, [m, n](Node& node) {
        if (!node.parents[0]->requires_grad) return;
        Tensor& g = node.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = node.value.data.data() + i * n;
            const double* dy = node.grad.data.data() + i * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += dy[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g.data[i * n + j] += y[j] * (dy[j] - s);
        }
    });
}

// Per row: (x - min) / (max - min); a constant row maps to all zeros. The
// adjoint holds the argmin/argmax selection fixed (first index at ties);
// degenerate rows contribute zero gradient.
inline Var minmax_rows(const Var& x) {
    x.value().require_rank(2, "minmax_rows");
    std::size_t m = x.value().shape[0], n = x.value().shape[1];
    Tensor out({m, n});
    std::vector<std::size_t> imin(m), imax(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.value().data.data() + i * n;
        std::size_t mi = 0, ma = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (xi[j] < xi[mi]) mi = j;
            if (xi[j] > xi[ma]) ma = j;
        }
        imin[i] = mi;
        imax[i] = ma;
        double lo = xi[mi], hi = xi[ma];
        if (hi == lo) {
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = 0.0;
        } else {
            double inv = 1.0 / (hi - lo);
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = (xi[j] - lo) * inv;
            // the extremes are exactly 0 and 1 by definition; make the
            // floating-point result honor that
            out.data[i * n + mi] = 0.0;
            out.data[i * n + ma] = 1.0;
        }
    }
    return Var::make(std::move(out), "minmax_rows", {x},
                     [m, n, imin = std::move(imin), imax = std::move(imax)](Node& node) {
        if (!node.parents[0]->requires_grad) return;
        const Tensor& xv = node.parents[0]->value;
        Tensor& g = node.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t mi = imin[i], ma = imax[i];
            double lo = xv.data[i * n + mi], hi = xv.data[i * n + ma];
            if (hi == lo) continue;
            double inv = 1.0 / (hi - lo);
            const double* y = node.value.data.data() + i * n;
            const double* dy = node.grad.data.data() + i * n;
            double sum_dy = 0.0, sum_dyy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sum_dy += dy[j];
                sum_dyy += dy[j] * y[j];
            }
            for (std::size_t j = 0; j < n; ++j) g.data[i * n + j] += dy[j] * inv;
            g.data[i * n + mi] += (-sum_dy + sum_dyy) * inv;
            g.data[i * n + ma] += -sum_dyy * inv;
        }
    });
}

// Per-row mean 0, variance 1 (population), then affine. Epsilon inside the
// square root.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6) {
    x.value().require_rank(2, "layer_norm");
    std::size_t m = x.value().shape[0], n = x.value().shape[1];
    if (gamma.value().shape != Shape{n} || beta.value().shape != Shape{n})
        throw dimension_error("layer_norm: affine params must be [" + std::to_string(n) + "]");
    Tensor out({m, n});
    Tensor xhat({m, n});
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.value().data.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            double h = (xi[j] - mu) * is;
            xhat.data[i * n + j] = h;
            out.data[i * n + j] = gamma.value().data[j] * h + beta.value().data[j];
        }
    }
    return Var::make(std::move(out), "layer_norm", {x, gamma, beta},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& node) {
        const Tensor& gv = node.parents[1]->value;
        if (node.parents[1]->requires_grad) {
            Tensor& g = node.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    g.data[j] += node.grad.data[i * n + j] * xhat.data[i * n + j];
        }
        if (node.parents[2]->requires_grad) {
            Tensor& g = node.parents[2]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g.data[j] += node.grad.data[i * n + j];
        }
        if (node.parents[0]->requires_grad) {
            Tensor& g = node.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    double dh = node.grad.data[i * n + j] * gv.data[j];
                    mean_dh += dh;
                    mean_dh_h += dh * xhat.data[i * n + j];
                }
                mean_dh /= static_cast<double>(n);
                mean_dh_h /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    double dh = node.grad.data[i * n + j] * gv.data[j];
                    g.data[i * n + j] +=
                        inv_std[i] * (dh - mean_dh - xhat.data[i * n + j] * mean_dh_h);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// activations

enum class Act { relu, sigmoid, gelu };

inline Act act_from_string(const std::string& s) {
    if (s == "relu") return Act::relu;
    if (s == "sigmoid") return Act::sigmoid;
    if (s == "gelu") return Act::gelu;
    throw config_error("unknown activation kind '" + s + "'");
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        double e = std::exp(-std::min(x, 700.0));
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(std::max(x, -700.0));
    return e / (1.0 + e);
}

inline Var relu(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return Var::make(std::move(out), "relu", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (xv.data[i] > 0.0) g.data[i] += n.grad.data[i];
    });
}

inline Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data) v = sigmoid_scalar(v);
    return Var::make(std::move(out), "sigmoid", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            double y = n.value.data[i];
            g.data[i] += n.grad.data[i] * y * (1.0 - y);
        }
    });
}

// Exact form x * Phi(x).
inline Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor out = x.value();
    for (double& v : out.data) v = v * 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    return Var::make(std::move(out), "gelu", {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            double v = xv.data[i];
            double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            g.data[i] += n.grad.data[i] * (phi + v * pdf);
        }
    });
}

inline Var activate(const Var& x, Act kind) {
    switch (kind) {
        case Act::relu: return relu(x);
        case Act::sigmoid: return sigmoid(x);
        case Act::gelu: return gelu(x);
    }
    throw config_error("activate: invalid kind");
}

// ---------------------------------------------------------------------------
// spatial

// Keep entries >= tau, zero the rest. The selection is held fixed in the
// adjoint.
inline Var threshold_keep(const Var& x, double tau) {
    Tensor out = x.value();
    for (double& v : out.data)
        if (v < tau) v = 0.0;
    return Var::make(std::move(out), "threshold_keep", {x}, [tau](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& xv = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (xv.data[i] >= tau) g.data[i] += n.grad.data[i];
    });
}

namespace detail {

struct LerpAxis {
    std::size_t i0, i1;
    double w; // weight of i1
};

inline std::vector<LerpAxis> bilinear_axis(std::size_t in, std::size_t out) {
    // align_corners = false: src = (dst + 0.5) * in/out - 0.5, clamped.
    std::vector<LerpAxis> m(out);
    double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
        std::size_t i0 = static_cast<std::size_t>(std::floor(src));
        std::size_t i1 = std::min(i0 + 1, in - 1);
        m[d] = {i0, i1, src - static_cast<double>(i0)};
    }
    return m;
}

} // namespace detail

// [h, w, c] -> [oh, ow, c], align_corners=false; the identity when sizes match.
inline Var resize_bilinear(const Var& x, std::size_t oh, std::size_t ow) {
    x.value().require_rank(3, "resize_bilinear");
    if (oh == 0 || ow == 0) throw dimension_error("resize_bilinear: zero target extent");
    std::size_t h = x.value().shape[0], w = x.value().shape[1], c = x.value().shape[2];
    auto ym = detail::bilinear_axis(h, oh);
    auto xm = detail::bilinear_axis(w, ow);
    Tensor out({oh, ow, c});
    const double* src = x.value().data.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double w00 = (1 - ym[oy].w) * (1 - xm[ox].w);
            double w01 = (1 - ym[oy].w) * xm[ox].w;
            double w10 = ym[oy].w * (1 - xm[ox].w);
            double w11 = ym[oy].w * xm[ox].w;
            const double* p00 = src + (ym[oy].i0 * w + xm[ox].i0) * c;
            const double* p01 = src + (ym[oy].i0 * w + xm[ox].i1) * c;
            const double* p10 = src + (ym[oy].i1 * w + xm[ox].i0) * c;
            const double* p11 = src + (ym[oy].i1 * w + xm[ox].i1) * c;
            double* o = out.data.data() + (oy * ow + ox) * c;
            for (std::size_t ch = 0; ch < c; ++ch)
                o[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
        }
    }
    return Var::make(std::move(out), "resize_bilinear", {x},
                     [h, w, c, oh, ow, ym = std::move(ym), xm = std::move(xm)](Node& n) {
        (void)h;
        if (!n.parents[0]->requires_grad) return;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double w00 = (1 - ym[oy].w) * (1 - xm[ox].w);
                double w01 = (1 - ym[oy].w) * xm[ox].w;
                double w10 = ym[oy].w * (1 - xm[ox].w);
                double w11 = ym[oy].w * xm[ox].w;
                const double* d = n.grad.data.data() + (oy * ow + ox) * c;
                double* g00 = g.data.data() + (ym[oy].i0 * w + xm[ox].i0) * c;
                double* g01 = g.data.data() + (ym[oy].i0 * w + xm[ox].i1) * c;
                double* g10 = g.data.data() + (ym[oy].i1 * w + xm[ox].i0) * c;
                double* g11 = g.data.data() + (ym[oy].i1 * w + xm[ox].i1) * c;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    g00[ch] += w00 * d[ch];
                    g01[ch] += w01 * d[ch];
                    g10[ch] += w10 * d[ch];
                    g11[ch] += w11 * d[ch];
                }
            }
        }
    });
}

} // namespace camoseg::ops
