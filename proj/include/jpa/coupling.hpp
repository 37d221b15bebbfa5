#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace jpa {

/// A series coupler X(w) feeding a load reactance X_L(w) from a source resistance. Poles are the
/// zeros of X + X_L, where the pump sees a series resonance.
struct ReactiveNetwork {
    std::function<double(double)> coupler_reactance;  ///< X(w), ohms
    std::function<double(double)> load_reactance;     ///< X_L(w), ohms
    double r_source = 50.0;                           ///< Z0, ohms
    std::vector<double> poles;                        ///< rad/s, ascending

    /// Phi0^2 / (2 Z0 (2 pi)^2).
    [[nodiscard]] double alpha() const;
};

/// Coupling capacitor into the parallel C || L_arr seen at the array node:
/// X = -1/(w C_c), X_L = -1/(w C - 1/(w L_arr)). The single pole is 1/sqrt(L_arr (C + C_c)).
[[nodiscard]] ReactiveNetwork capacitive_network(double c_coupling, double c_main, double l_array,
                                                 double z0 = 50.0);

/// General network; poles located by scanning X + X_L on [omega_lo, omega_hi] and bisecting
/// each sign change that is a zero rather than a reactance pole.
[[nodiscard]] ReactiveNetwork make_network(std::function<double(double)> coupler,
                                           std::function<double(double)> load, double r_source,
                                           double omega_lo, double omega_hi,
                                           int scan_points = 20000);

inline constexpr double kDefaultPoleGuard = 1e-3;

/// (X_L / (X + X_L))^2. Throws NearPole within guard * w_pole of a pole.
[[nodiscard]] double pce(const ReactiveNetwork& net, double omega,
                         double guard = kDefaultPoleGuard);

/// Same quantity from the power route: alpha w^2 |phi_p|^2 / P_a with
/// P_a = |phi_p Phi0/2pi * i w (1 + Z/Z_L)|^2 / (2 Z0), Z = iX, Z_L = iX_L.
[[nodiscard]] double pce_from_power(const ReactiveNetwork& net, double omega,
                                    double phi_p = 1.0, double guard = kDefaultPoleGuard);

/// w -> infinity limit of the capacitive network: (C_c / (C + C_c))^2.
[[nodiscard]] double capacitive_pce_limit(double c_coupling, double c_main);

struct PceSample {
    double omega = 0.0;
    std::optional<double> eta;  ///< empty near a pole
};

[[nodiscard]] std::vector<PceSample> pce_spectrum(const ReactiveNetwork& net,
                                                  std::span<const double> omega_grid,
                                                  double guard = kDefaultPoleGuard);

/// Columns frequency_hz, eta_pce, eta_pce_db, near_pole_flag.
void write_pce_csv(std::ostream& os, std::span<const PceSample> spectrum);

/// eta_PCE * eta_PAE; both must lie in [0, 1].
[[nodiscard]] double total_efficiency(double eta_pce, double eta_pae);

}  // namespace jpa
