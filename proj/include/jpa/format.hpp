#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>

namespace jpa {

/// Shortest round-trip decimal form; identical bytes for identical doubles.
[[nodiscard]] inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string format_number(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

}  // namespace jpa
