#pragma once

#include <optional>
#include <span>
#include <vector>

#include "jpa/circuit.hpp"
#include "jpa/dynamics.hpp"

namespace jpa {

/// How the weak probe and the pump are laid out on the frequency grid.
struct ProbeSetup {
    double probe_power_dbm = -140.0;
    double detuning_hz = 1e6;  ///< probe offset from pump/2
    double base_frequency_hz = 1e6;
    /// Unset: twice the small-signal resonance at the bias, snapped to the grid.
    std::optional<double> pump_frequency_hz;

    friend bool operator==(const ProbeSetup&, const ProbeSetup&) = default;
};

/// Pump frequency used for a bias: explicit, or 2 f0 rounded so that pump/2 is on the grid.
[[nodiscard]] double pump_frequency_for(const FluxBias& bias, const ProbeSetup& probe);

/// One steady-state gain evaluation. Gain is |phi_out(w_s)|^2 / |phi_in(w_s)|^2, i.e. it is
/// normalized to the pump-off response, which is unity for the lossless port.
struct GainMeasurement {
    double pump_frequency_hz = 0.0;
    double probe_frequency_hz = 0.0;
    double pump_power_dbm = 0.0;       ///< incident pump wave
    double core_pump_power_dbm = 0.0;  ///< wave power of the node phase at w_p
    double probe_power_dbm = 0.0;
    double gain_db = 0.0;
    double output_power_dbm = 0.0;  ///< outgoing wave at w_s
    double idler_gain_db = 0.0;     ///< outgoing idler power over incoming probe power
    /// G_s - (w_i/w_s) G_i: outgoing signal minus idler photon flux per incoming photon.
    double signal_minus_idler = 0.0;
    double power_imbalance = 0.0;
    bool converged = false;
};

[[nodiscard]] GainMeasurement measure_gain(const CircuitParams& params, const FluxBias& bias,
                                           double pump_frequency_hz, double pump_power_dbm,
                                           double probe_frequency_hz, double probe_power_dbm,
                                           double base_frequency_hz,
                                           const SolverOptions& solver = {});

struct TuneCaps {
    double tolerance_db = 0.05;
    /// First sample sits this far below the linear-theory parametric threshold.
    double start_below_threshold_db = 10.0;
    double coarse_step_db = 1.0;
    /// Give up this far above the linear-theory threshold.
    double max_above_threshold_db = 20.0;
    int max_evaluations = 80;

    friend bool operator==(const TuneCaps&, const TuneCaps&) = default;
};

struct GainSample {
    double pump_power_dbm = 0.0;
    double gain_db = 0.0;
};

struct PumpOperatingPoint {
    double pump_frequency_hz = 0.0;
    double pump_power_dbm = 0.0;  ///< -inf when no pump is needed
    double core_pump_power_dbm = 0.0;
    double achieved_gain_db = 0.0;
    GainMeasurement measurement;
    std::vector<GainSample> samples;  ///< coarse sweep, in evaluation order
};

/// Incident pump power at which linear theory puts the parametric threshold.
[[nodiscard]] double threshold_pump_estimate_dbm(const CircuitParams& params, const FluxBias& bias,
                                                 double pump_frequency_hz);

/// Lowest pump power reaching target_gain_db within caps.tolerance_db: coarse upward sweep,
/// then bracketed root refinement on the first crossing. Throws MaxGainBelowTarget or
/// DivergedTrajectory.
[[nodiscard]] PumpOperatingPoint tune_pump(const CircuitParams& params, const FluxBias& bias,
                                           double target_gain_db, const ProbeSetup& probe = {},
                                           const TuneCaps& caps = {},
                                           const SolverOptions& solver = {});

/// Refines a bracket gain(lo) < target <= gain(hi) (gains already known) to within
/// tolerance_db of the target. Throws NoConvergence if the bracket cannot be closed.
[[nodiscard]] GainMeasurement refine_pump_power(const CircuitParams& params, const FluxBias& bias,
                                                double target_gain_db, GainSample lo,
                                                GainSample hi, double tolerance_db,
                                                const ProbeSetup& probe = {},
                                                const SolverOptions& solver = {});

struct GainCurvePoint {
    double probe_frequency_hz = 0.0;
    double gain_db = 0.0;
};

struct GainCurve {
    FluxBias bias;
    double pump_frequency_hz = 0.0;
    double pump_power_dbm = 0.0;
    std::vector<GainCurvePoint> points;  ///< sorted by frequency
    double peak_gain_db = 0.0;
    std::optional<double> bandwidth_3db_hz;
    std::optional<double> gbw_hz;  ///< sqrt(linear peak gain) * bandwidth
};

/// Gain versus probe detuning from pump/2 at a fixed pump. Detunings must be nonzero and on
/// the base grid.
[[nodiscard]] GainCurve gain_curve(const CircuitParams& params, const FluxBias& bias,
                                   double pump_power_dbm, std::span<const double> detuning_grid_hz,
                                   const ProbeSetup& probe = {}, const SolverOptions& solver = {});

struct SaturationPoint {
    double input_power_dbm = 0.0;
    double gain_db = 0.0;
};

struct SaturationResult {
    double input_p1db_dbm = 0.0;
    double output_p1db_dbm = 0.0;
    double small_signal_gain_db = 0.0;
    std::vector<SaturationPoint> sweep;
};

/// 1 dB compression from an explicit input-power grid. Small-signal gain is the gain at the
/// lowest power; the first downward crossing of (small-signal - 1 dB) is interpolated linearly.
[[nodiscard]] SaturationResult saturation_sweep(const CircuitParams& params, const FluxBias& bias,
                                                double pump_power_dbm, double probe_frequency_hz,
                                                std::span<const double> input_powers_dbm,
                                                const ProbeSetup& probe = {},
                                                const SolverOptions& solver = {});

/// Compression point from an already evaluated sweep (same rules as saturation_sweep).
[[nodiscard]] SaturationResult compression_from_sweep(std::vector<SaturationPoint> sweep);

struct AdaptiveSaturationOptions {
    double start_dbm = -130.0;
    double coarse_step_db = 4.0;
    double stop_dbm = -40.0;
    double tolerance_db = 0.01;  ///< on the gain at the refined crossing

    friend bool operator==(const AdaptiveSaturationOptions&,
                           const AdaptiveSaturationOptions&) = default;
};

/// Coarse upward sweep until the gain has dropped 1 dB below small_signal_gain_db, then a
/// bracketed refinement of the crossing. The returned sweep holds every evaluated point.
[[nodiscard]] SaturationResult find_p1db(const CircuitParams& params, const FluxBias& bias,
                                         double pump_power_dbm, double probe_frequency_hz,
                                         double small_signal_gain_db,
                                         const AdaptiveSaturationOptions& opts = {},
                                         const ProbeSetup& probe = {},
                                         const SolverOptions& solver = {});

/// (P_out,1dB - P_in,1dB) / P_pump with all powers converted to watts.
[[nodiscard]] double pump_added_efficiency(const SaturationResult& sat, double pump_power_dbm);
/// P_out,1dB / P_pump, the large-gain approximation.
[[nodiscard]] double pump_added_efficiency_approx(const SaturationResult& sat,
                                                  double pump_power_dbm);

}  // namespace jpa
