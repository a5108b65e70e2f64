// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "camoseg/core/error.hpp"
#include "camoseg/core/tensor.hpp"

namespace camoseg::io {

// Binary tensor container:
//   magic "MFT1" | dtype u8 (0 = f32, 1 = f64) | rank u8 | reserved u16 = 0
//   extents rank x u64 LE | payload row-major IEEE-754 LE
// Rank 0 is disallowed; scalars are rank-1 tensors of extent 1.

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::uint8_t* p;
    std::size_t size;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n, const char* what) {
        if (pos + n > size)
            throw format_error(where + ": truncated at byte " + std::to_string(pos) + ", need " +
                               std::to_string(n) + " more byte(s) for " + what + ", have " +
                               std::to_string(size - pos));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return p[pos++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    void bytes(void* dst, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(dst, p + pos, n);
        pos += n;
    }
};

inline std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error(path + ": cannot open for reading");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return data;
}

inline void spill(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error(path + ": write failed");
}

} // namespace detail

inline void encode_tensor(std::vector<std::uint8_t>& out, const Tensor& t, Dtype dtype = Dtype::f64) {
    if (t.rank() == 0) throw format_error("tensor container: rank 0 is disallowed");
    if (t.rank() > 255) throw format_error("tensor container: rank exceeds 255");
    out.push_back('M');
    out.push_back('F');
    out.push_back('T');
    out.push_back('1');
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    detail::put_u16(out, 0);
    for (std::size_t e : t.shape) detail::put_u64(out, static_cast<std::uint64_t>(e));
    if (dtype == Dtype::f64) {
        for (double v : t.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            detail::put_u64(out, bits);
        }
    } else {
        for (double v : t.data) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_u32(out, bits);
        }
    }
}

inline Tensor decode_tensor(detail::Reader& r) {
    std::size_t magic_at = r.pos;
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "MFT1", 4) != 0)
        throw format_error(r.where + ": bad magic at byte " + std::to_string(magic_at));
    std::size_t dtype_at = r.pos;
    std::uint8_t dt = r.u8("dtype");
    if (dt > 1)
        throw format_error(r.where + ": bad dtype code " + std::to_string(dt) + " at byte " +
                           std::to_string(dtype_at));
    std::size_t rank_at = r.pos;
    std::uint8_t rank = r.u8("rank");
    if (rank == 0)
        throw format_error(r.where + ": rank 0 at byte " + std::to_string(rank_at));
    r.u16("reserved");
    Shape shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) shape[i] = static_cast<std::size_t>(r.u64("extent"));
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    if (dt == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = r.u64("f64 payload");
            std::memcpy(&data[i], &bits, 8);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = r.u32("f32 payload");
            float f;
            std::memcpy(&f, &bits, 4);
            data[i] = static_cast<double>(f);
        }
    }
    return Tensor(std::move(shape), std::move(data));
}

inline void write_tensor(const std::string& path, const Tensor& t, Dtype dtype = Dtype::f64) {
    std::vector<std::uint8_t> bytes;
    encode_tensor(bytes, t, dtype);
    detail::spill(path, bytes);
}

inline Tensor read_tensor(const std::string& path) {
    auto bytes = detail::slurp(path);
    detail::Reader r{bytes.data(), bytes.size(), 0, path};
    Tensor t = decode_tensor(r);
    if (r.pos != bytes.size())
        throw format_error(path + ": " + std::to_string(bytes.size() - r.pos) +
                           " trailing byte(s) after payload");
    return t;
}

} // namespace camoseg::io
