// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

namespace camoseg {

// Linear warm-up to the peak rate, then cosine decay to zero at the final
// step. Step indices are 0-based.
inline double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                    double peak) {
    if (total_steps == 0) return 0.0;
    if (warmup_steps > 0 && step < warmup_steps)
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps + 1) return peak;
    double t = static_cast<double>(step - warmup_steps) /
               static_cast<double>(total_steps - 1 - warmup_steps);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

} // namespace camoseg
