#pragma once

#include <cmath>
#include <numbers>

namespace jpa {

/// Magnetic flux quantum, Wb.
inline constexpr double kFluxQuantum = 2.067833848e-15;
/// Reduced flux quantum Phi0 / 2pi, Wb.
inline constexpr double kReducedFluxQuantum = kFluxQuantum / (2.0 * std::numbers::pi);
/// Reduced Planck constant, J s.
inline constexpr double kHbar = 1.054571817e-34;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kPico = 1e-12;
inline constexpr double kGiga = 1e9;
inline constexpr double kMega = 1e6;

[[nodiscard]] inline double henries_from_ph(double ph) { return ph * kPico; }
[[nodiscard]] inline double ph_from_henries(double h) { return h / kPico; }
[[nodiscard]] inline double farads_from_pf(double pf) { return pf * kPico; }
[[nodiscard]] inline double pf_from_farads(double f) { return f / kPico; }

[[nodiscard]] inline double watts_from_dbm(double dbm) {
    return 1e-3 * std::pow(10.0, dbm / 10.0);
}

/// Zero watts maps to -inf dBm.
[[nodiscard]] inline double dbm_from_watts(double watts) {
    return 10.0 * std::log10(watts / 1e-3);
}

[[nodiscard]] inline double db_from_ratio(double power_ratio) { return 10.0 * std::log10(power_ratio); }
[[nodiscard]] inline double ratio_from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace jpa
