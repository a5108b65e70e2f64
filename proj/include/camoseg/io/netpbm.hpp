// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "camoseg/core/error.hpp"
#include "camoseg/core/tensor.hpp"
#include "camoseg/io/tensor_io.hpp"

namespace camoseg::io {

// Binary netpbm only: P6 (RGB) for images, P5 (gray) for masks, maxval 255.

namespace detail {

struct PnmHeader {
    std::size_t width, height;
    std::size_t payload_at;
};

inline PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& bytes, const std::string& path,
                                  const char* magic) {
    if (bytes.size() < 2 || bytes[0] != static_cast<std::uint8_t>(magic[0]) ||
        bytes[1] != static_cast<std::uint8_t>(magic[1]))
        throw format_error(path + ": not a " + magic + " file");
    std::size_t pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw format_error(path + ": missing " + what + " in header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    PnmHeader h{};
    h.width = read_int("width");
    h.height = read_int("height");
    std::size_t maxval = read_int("maxval");
    if (maxval != 255) throw format_error(path + ": maxval must be 255, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw format_error(path + ": header not terminated by whitespace");
    h.payload_at = pos + 1;
    return h;
}

} // namespace detail

// P6 -> [h, w, 3] scaled to [0, 1].
inline Tensor read_ppm(const std::string& path) {
    auto bytes = detail::slurp(path);
    auto h = detail::parse_pnm_header(bytes, path, "P6");
    std::size_t need = h.width * h.height * 3;
    if (bytes.size() - h.payload_at < need)
        throw format_error(path + ": payload truncated, need " + std::to_string(need) +
                           " bytes, have " + std::to_string(bytes.size() - h.payload_at));
    Tensor img({h.height, h.width, 3});
    for (std::size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<double>(bytes[h.payload_at + i]) / 255.0;
    return img;
}

// P5 -> [h, w] scaled to [0, 1].
inline Tensor read_pgm(const std::string& path) {
    auto bytes = detail::slurp(path);
    auto h = detail::parse_pnm_header(bytes, path, "P5");
    std::size_t need = h.width * h.height;
    if (bytes.size() - h.payload_at < need)
        throw format_error(path + ": payload truncated, need " + std::to_string(need) +
                           " bytes, have " + std::to_string(bytes.size() - h.payload_at));
    Tensor img({h.height, h.width});
    for (std::size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<double>(bytes[h.payload_at + i]) / 255.0;
    return img;
}

// [h, w] values in [0, 1] -> P5, quantized as round(255 * v).
inline void write_pgm(const std::string& path, const Tensor& gray) {
    gray.require_rank(2, "write_pgm");
    std::vector<std::uint8_t> bytes;
    std::string header = "P5\n" + std::to_string(gray.shape[1]) + " " +
                         std::to_string(gray.shape[0]) + "\n255\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    for (double v : gray.data) {
        double q = std::min(std::max(v, 0.0), 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(q * 255.0)));
    }
    detail::spill(path, bytes);
}

// [h, w, 3] values in [0, 1] -> P6.
inline void write_ppm(const std::string& path, const Tensor& img) {
    img.require_rank(3, "write_ppm");
    if (img.shape[2] != 3) throw dimension_error("write_ppm: expected 3 channels");
    std::vector<std::uint8_t> bytes;
    std::string header = "P6\n" + std::to_string(img.shape[1]) + " " +
                         std::to_string(img.shape[0]) + "\n255\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    for (double v : img.data) {
        double q = std::min(std::max(v, 0.0), 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(q * 255.0)));
    }
    detail::spill(path, bytes);
}

} // namespace camoseg::io
