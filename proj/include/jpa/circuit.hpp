#pragma once

#include <optional>
#include <span>
#include <vector>

namespace jpa {

/// Uniform array of N rf SQUIDs (shunt L_s parallel to a junction L_J) resonated by C
/// and damped by a frequency-independent environment resistance. SI units throughout.
class CircuitParams {
public:
    CircuitParams(int n_squids, double l_shunt, double l_junction, double c_main, double r_env,
                  std::optional<double> c_coupling = std::nullopt);

    [[nodiscard]] int n_squids() const noexcept { return n_squids_; }
    [[nodiscard]] double l_shunt() const noexcept { return l_shunt_; }
    [[nodiscard]] double l_junction() const noexcept { return l_junction_; }
    [[nodiscard]] double c_main() const noexcept { return c_main_; }
    [[nodiscard]] double r_env() const noexcept { return r_env_; }
    [[nodiscard]] std::optional<double> c_coupling() const noexcept { return c_coupling_; }

    // Derived quantities are always recomputed from the fields.
    [[nodiscard]] double beta() const noexcept { return l_shunt_ / l_junction_; }
    [[nodiscard]] double gamma() const noexcept { return 1.0 / (c_main_ * r_env_); }
    [[nodiscard]] double omega_l_sq() const noexcept {
        return 1.0 / (c_main_ * l_shunt_ * n_squids_);
    }
    [[nodiscard]] double omega_j_sq() const noexcept { return 1.0 / (c_main_ * l_junction_); }

    [[nodiscard]] CircuitParams with_c_main(double c) const;
    [[nodiscard]] CircuitParams with_r_env(double r) const;

    friend bool operator==(const CircuitParams&, const CircuitParams&) = default;

private:
    int n_squids_;
    double l_shunt_;
    double l_junction_;
    double c_main_;
    double r_env_;
    std::optional<double> c_coupling_;
};

/// External flux bias with its self-consistent DC state.
struct FluxBias {
    double phi_e = 0.0;          ///< external phase per SQUID loop, 2 pi Phi_ext / Phi0
    double phi_ext_total = 0.0;  ///< N * phi_e
    double phi_dc = 0.0;         ///< total DC phase across the array
    double delta_phi = 0.0;      ///< phi_dc + phi_ext_total
    double omega0 = 0.0;         ///< small-signal resonance at this bias, rad/s

    /// Delta phi / N: the static phase across each junction.
    [[nodiscard]] double junction_phase(int n_squids) const noexcept {
        return delta_phi / n_squids;
    }

    friend bool operator==(const FluxBias&, const FluxBias&) = default;
};

/// Expansion of omega_J^2 sin((phi + Delta phi)/N) about phi = 0, in rad/s^2 per rad^k.
struct TaylorCoefficients {
    double c2 = 0.0;
    double c3 = 0.0;
    double c4 = 0.0;
};

struct TunabilityPoint {
    double phi_e = 0.0;
    double f0_hz = 0.0;
    double l_array = 0.0;
};

struct ParallelEquivalent {
    double r_parallel = 0.0;
    double c_parallel = 0.0;
};

/// Residual of the per-SQUID DC current balance, in per-SQUID phase units:
/// phi_dc / N + beta sin(Delta phi / N).
[[nodiscard]] double dc_residual(const CircuitParams& params, const FluxBias& bias);

/// Solves y = phi_e - beta sin y on the branch continuous from (0, 0); y = Delta phi / N.
[[nodiscard]] FluxBias solve_dc_phase(const CircuitParams& params, double phi_e);

/// Linearized array inductance N / (1/L_s + cos(Delta phi/N)/L_J).
[[nodiscard]] double array_inductance(const CircuitParams& params, const FluxBias& bias);

/// Small-signal resonance 1 / sqrt(L_arr C), rad/s.
[[nodiscard]] double resonant_frequency(const CircuitParams& params, const FluxBias& bias);

/// Q = r_env sqrt(C / L_arr) at the given bias.
[[nodiscard]] double quality_factor(const CircuitParams& params, const FluxBias& bias);

[[nodiscard]] TaylorCoefficients taylor_coefficients(const CircuitParams& params,
                                                     const FluxBias& bias);

/// Bias of maximal |c3| over phi_e in [0, pi]. Closed form: Delta phi / N = pi/2, so
/// phi_e* = pi/2 + beta.
[[nodiscard]] FluxBias max_c3_bias(const CircuitParams& params);

/// Same optimum located by bisection on d|c3|/d phi_e; used to cross-check the closed form.
[[nodiscard]] double max_c3_phi_e_numeric(const CircuitParams& params);

[[nodiscard]] std::vector<TunabilityPoint> tunability_curve(const CircuitParams& params,
                                                            std::span<const double> phi_e_grid);

/// Exact series-to-parallel transform of a source resistance z0 behind a coupling capacitor.
[[nodiscard]] ParallelEquivalent effective_environment(double z0, double c_coupling, double omega);

}  // namespace jpa
