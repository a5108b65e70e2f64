// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "camoseg/io/tensor_io.hpp"
#include "camoseg/model/params.hpp"

namespace camoseg::io {

// Checkpoint container:
//   magic "MFC1" | entry count u32 LE
//   per entry: name length u16 LE | UTF-8 name | trainable u8 | tensor container
// Entry order is the model registration order, so save -> load -> save is
// byte-identical.

struct CheckpointEntry {
    std::string name;
    bool trainable;
    Tensor tensor;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    std::vector<std::uint8_t> out;
    out.push_back('M');
    out.push_back('F');
    out.push_back('C');
    out.push_back('1');
    detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff)
            throw format_error("checkpoint: parameter name longer than 65535 bytes");
        detail::put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(e.trainable ? 1 : 0);
        encode_tensor(out, e.tensor, Dtype::f64);
    }
    return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                                      const std::string& where) {
    detail::Reader r{bytes.data(), bytes.size(), 0, where};
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "MFC1", 4) != 0) throw format_error(where + ": bad magic at byte 0");
    std::uint32_t count = r.u32("entry count");
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = r.u16("name length");
        std::string name(len, '\0');
        r.bytes(name.data(), len, "name");
        std::uint8_t trainable = r.u8("trainable flag");
        Tensor t = decode_tensor(r);
        for (const auto& prev : entries)
            if (prev.name == name)
                throw format_error(where + ": duplicate parameter name '" + name + "'");
        entries.push_back({std::move(name), trainable != 0, std::move(t)});
    }
    if (r.pos != bytes.size())
        throw format_error(where + ": " + std::to_string(bytes.size() - r.pos) +
                           " trailing byte(s) after last entry");
    return entries;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store) {
    std::vector<CheckpointEntry> entries;
    entries.reserve(store.all().size());
    for (const auto& p : store.all()) entries.push_back({p->name, p->trainable, p->tensor});
    detail::spill(path, encode_checkpoint(entries));
}

inline std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::slurp(path), path);
}

// Every parameter in the store must be present with matching shape; extra
// file entries are rejected.
inline void load_checkpoint(const std::string& path, ParamStore& store) {
    auto entries = read_checkpoint(path);
    std::size_t used = 0;
    for (const auto& e : entries) {
        Parameter* p = store.find(e.name);
        if (!p) throw format_error(path + ": unknown parameter '" + e.name + "'");
        if (p->tensor.shape != e.tensor.shape)
            throw format_error(path + ": parameter '" + e.name + "' has shape " +
                               shape_str(e.tensor.shape) + ", model expects " +
                               shape_str(p->tensor.shape));
        p->tensor = e.tensor;
        p->trainable = e.trainable;
        ++used;
    }
    if (used != store.all().size())
        throw format_error(path + ": checkpoint holds " + std::to_string(used) + " of " +
                           std::to_string(store.all().size()) + " model parameters");
}

} // namespace camoseg::io
