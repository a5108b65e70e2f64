// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace camoseg {

// splitmix64 step; also used as a stateless hash mixer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t hash_str(std::uint64_t seed, std::string_view s) {
    std::uint64_t h = seed;
    for (char c : s) h = hash_combine(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return splitmix64(h);
}

// Small deterministic stream RNG. State is a single u64 so it is trivially
// serializable and identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(splitmix64(seed ^ 0x853c49e6748fea9bull)) {}

    std::uint64_t next_u64() {
        state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
        return splitmix64(state_);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws two uniforms per call, no cached spare.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    std::uint64_t state_;
};

} // namespace camoseg
