// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "camoseg/core/error.hpp"
#include "camoseg/core/rng.hpp"

namespace camoseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major n-d array of doubles. Values are treated as immutable once a
// tensor enters the autodiff graph; all ops return fresh tensors.
class Tensor {
public:
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(shape_numel(shape), fill) {
        for (std::size_t e : shape)
            if (e == 0) throw dimension_error("tensor: zero extent in shape " + shape_str(shape));
    }

    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (shape_numel(shape) != data.size())
            throw dimension_error("tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " values");
    }

    // Construction with the finiteness invariant enforced.
    static Tensor checked(Shape s, std::vector<double> values) {
        Tensor t(std::move(s), std::move(values));
        t.require_finite("tensor construction");
        return t;
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
        return t;
    }

    static Tensor randn(Shape s, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = sigma * rng.normal();
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { require_rank(2, "rows"); return shape[0]; }
    std::size_t cols() const { require_rank(2, "cols"); return shape[1]; }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    double item() const {
        if (numel() != 1) throw dimension_error("item: tensor " + shape_str(shape) + " is not scalar");
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const std::string& where) const {
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!std::isfinite(data[i]))
                throw numeric_error(where + ": non-finite value at flat index " + std::to_string(i));
    }

    void require_rank(std::size_t r, const char* who) const {
        if (shape.size() != r)
            throw dimension_error(std::string(who) + ": expected rank " + std::to_string(r) +
                                  ", got " + shape_str(shape));
    }
};

// When on, every primitive validates that its output is finite and throws
// numeric_error naming the op otherwise. Enabled by the gradcheck harness.
inline bool& checked_mode() {
    static bool on = false;
    return on;
}

struct CheckedModeGuard {
    bool prev;
    explicit CheckedModeGuard(bool on = true) : prev(checked_mode()) { checked_mode() = on; }
    ~CheckedModeGuard() { checked_mode() = prev; }
};

} // namespace camoseg
