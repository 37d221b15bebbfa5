#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "jpa/circuit.hpp"

namespace jpa {

using Complex = std::complex<double>;

enum class ToneRole { pump, probe };

/// A drive tone phi_in(t) = amplitude * cos(2 pi f t + phase); amplitude is incoming-wave
/// phase in radians.
struct Tone {
    double frequency_hz = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
    ToneRole role = ToneRole::probe;
};

/// A commensurate set of tones. Every tone frequency is an integer multiple of the base.
class DriveSpec {
public:
    DriveSpec(double base_frequency_hz, std::vector<Tone> tones);

    [[nodiscard]] double base_frequency_hz() const noexcept { return base_frequency_hz_; }
    [[nodiscard]] const std::vector<Tone>& tones() const noexcept { return tones_; }
    /// Tone frequency divided by the base frequency.
    [[nodiscard]] std::int64_t multiple(const Tone& tone) const;
    [[nodiscard]] std::optional<Tone> pump() const;
    [[nodiscard]] std::optional<Tone> probe() const;

private:
    double base_frequency_hz_;
    std::vector<Tone> tones_;
};

/// Pump at pump_f and probe at pump_f/2 + detuning; the idler pump_f/2 - detuning is on the
/// same grid. Throws IncommensurateDrive otherwise.
[[nodiscard]] DriveSpec make_two_tone(double pump_f, double probe_detuning, double base_f,
                                      double pump_amp, double probe_amp);

/// Integer multiple of base_f closest to frequency_hz, or IncommensurateDrive when the
/// relative mismatch exceeds 1e-9.
[[nodiscard]] std::int64_t grid_multiple(double frequency_hz, double base_f);

enum class Nonlinearity {
    full_sine,  ///< the un-truncated junction sine
    cubic,      ///< expansion through the phi^3 term (test hook)
    linear,     ///< sine replaced by its linear term (test hook)
};

struct PhaseState {
    double phi = 0.0;
    double dphi = 0.0;
};

struct SolverOptions {
    int steps_per_pump_period = 512;
    double tolerance = 1e-5;
    /// Warm-up length in reference-tone periods. Unset: ceil(20 Q sqrt(G_target)).
    std::optional<std::int64_t> warmup_periods;
    double target_gain_db = 20.0;
    int min_common_periods = 2;
    int max_common_periods = 8;
    /// Extra harmonics to track, as multiples of the drive's base frequency.
    std::vector<std::int64_t> extra_harmonics;
    PhaseState initial{};
    Nonlinearity nonlinearity = Nonlinearity::full_sine;
    /// When false, running out of periods throws NoConvergence instead of returning.
    bool allow_unconverged = false;
    /// Debug dump of (time_s, phi_rad, dphi_rad_per_s), one row every trajectory_stride steps.
    std::optional<std::filesystem::path> trajectory_csv;
    std::int64_t trajectory_stride = 1;

    friend bool operator==(const SolverOptions&, const SolverOptions&) = default;
};

/// Complex amplitudes X with x(t) = Re[X exp(i omega t)]; DC entries hold the mean.
struct HarmonicEntry {
    std::int64_t multiple = 0;  ///< of the drive's base frequency
    double frequency_hz = 0.0;
    Complex node{};
    Complex incoming{};
    Complex outgoing{};
};

struct SteadyStateSolution {
    std::vector<HarmonicEntry> harmonics;  ///< sorted by frequency
    bool converged = false;
    int periods_integrated = 0;  ///< common periods after warm-up
    std::int64_t warmup_steps = 0;
    std::int64_t steps_per_common_period = 0;
    double common_period_s = 0.0;
    double residual = 0.0;
    /// Time-averaged incoming/outgoing wave power over the final common period, all
    /// frequencies included (Parseval), watts.
    double incoming_power_w = 0.0;
    double outgoing_power_w = 0.0;

    [[nodiscard]] const HarmonicEntry* find(double frequency_hz) const;
    [[nodiscard]] const HarmonicEntry& at(double frequency_hz) const;
    /// |P_out - P_in| / P_in over all frequencies.
    [[nodiscard]] double power_imbalance() const;
};

struct StateDerivative {
    double dphi = 0.0;
    double ddphi = 0.0;
};

/// sin((phi + Delta phi)/N) - sin(Delta phi/N) - (phi/N) cos(Delta phi/N), evaluated without
/// cancellation for small phi.
[[nodiscard]] double nonlinear_bracket(double phi, double junction_phase, int n_squids,
                                       Nonlinearity model = Nonlinearity::full_sine);

/// Right-hand side of the DC-separated equation of motion.
[[nodiscard]] StateDerivative eom_rhs(const CircuitParams& params, const FluxBias& bias,
                                      PhaseState state, double drive_velocity,
                                      Nonlinearity model = Nonlinearity::full_sine);

/// Classical fourth-order Runge-Kutta step for a second-order system x'' = f(t, x, x').
template <typename Accel>
PhaseState rk4_step(const Accel& accel, PhaseState s, double t, double h) {
    const double k1x = s.dphi;
    const double k1v = accel(t, s.phi, s.dphi);
    const double k2x = s.dphi + 0.5 * h * k1v;
    const double k2v = accel(t + 0.5 * h, s.phi + 0.5 * h * k1x, k2x);
    const double k3x = s.dphi + 0.5 * h * k2v;
    const double k3v = accel(t + 0.5 * h, s.phi + 0.5 * h * k2x, k3x);
    const double k4x = s.dphi + h * k3v;
    const double k4v = accel(t + h, s.phi + h * k3x, k4x);
    return {s.phi + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            s.dphi + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)};
}

/// Integrates from opts.initial to a periodic steady state and extracts harmonics.
[[nodiscard]] SteadyStateSolution integrate_to_steady_state(const CircuitParams& params,
                                                            const FluxBias& bias,
                                                            const DriveSpec& drive,
                                                            const SolverOptions& opts = {});

/// Diagnostics hook called with every solution integrate_to_steady_state returns, possibly
/// from several worker threads at once. Install or clear only while nothing is integrating.
using SolutionObserver = std::function<void(const SteadyStateSolution&)>;
void set_solution_observer(SolutionObserver observer);

/// Power carried by a wave of phase amplitude |A| at omega into r_env:
/// (Phi0/2pi)^2 omega^2 |A|^2 / (2 r_env).
[[nodiscard]] double wave_power(double amplitude, double omega, double r_env);
[[nodiscard]] double wave_power_dbm(double amplitude, double omega, double r_env);
[[nodiscard]] double amplitude_for_power(double watts, double omega, double r_env);
[[nodiscard]] double amplitude_for_power_dbm(double dbm, double omega, double r_env);

}  // namespace jpa
