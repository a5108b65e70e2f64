// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace camoseg {

// Shape or extent disagreement between operands.
struct dimension_error : std::runtime_error {
    explicit dimension_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad key, inconsistent dimensions, wrong mode.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content (bad magic, truncated payload, wrong header).
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or a failed numeric check.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace camoseg
