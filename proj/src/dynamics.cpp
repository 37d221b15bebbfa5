#include "jpa/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "jpa/errors.hpp"
#include "jpa/units.hpp"

namespace jpa {

namespace {

// sin(u) - u without cancellation near zero.
double sin_minus_identity(double u, double sin_u) {
    if (std::abs(u) < 1e-2) {
        const double u2 = u * u;
        return u * u2 * (-1.0 / 6.0 + u2 * (1.0 / 120.0 + u2 * (-1.0 / 5040.0 + u2 / 362880.0)));
    }
    return sin_u - u;
}

struct EomModel {
    double gamma;
    double omega0_sq;
    double omega_j_sq;
    double inv_n;
    double sin_a;
    double cos_a;
    Nonlinearity model;

    EomModel(const CircuitParams& params, const FluxBias& bias, Nonlinearity nl)
        : gamma(params.gamma()),
          omega0_sq(bias.omega0 * bias.omega0),
          omega_j_sq(params.omega_j_sq()),
          inv_n(1.0 / params.n_squids()),
          sin_a(std::sin(bias.junction_phase(params.n_squids()))),
          cos_a(std::cos(bias.junction_phase(params.n_squids()))),
          model(nl) {}

    [[nodiscard]] double bracket(double phi) const {
        const double u = phi * inv_n;
        switch (model) {
            case Nonlinearity::linear:
                return 0.0;
            case Nonlinearity::cubic:
                return -sin_a * u * u / 2.0 - cos_a * u * u * u / 6.0;
            case Nonlinearity::full_sine:
                break;
        }
        if (std::abs(u) < 1e-3) {
            const double u2 = u * u;
            const double cos_minus_one = u2 * (-0.5 + u2 * (1.0 / 24.0 - u2 / 720.0));
            return sin_a * cos_minus_one + cos_a * sin_minus_identity(u, 0.0);
        }
        double s = 0.0;
        double c = 0.0;
        ::sincos(u, &s, &c);
        return sin_a * (c - 1.0) + cos_a * (s - u);
    }

    [[nodiscard]] double accel(double phi, double dphi, double drive_velocity) const {
        return -gamma * dphi - omega0_sq * phi - omega_j_sq * bracket(phi) +
               2.0 * gamma * drive_velocity;
    }
};

// Unit phasor exp(i * 2 pi * index / period) from an exact integer phase index.
Complex grid_phasor(std::int64_t index, std::int64_t period, double offset = 0.0) {
    const std::int64_t r = index % period;
    return std::polar(1.0, kTwoPi * static_cast<double>(r) / static_cast<double>(period) + offset);
}

constexpr std::int64_t kReseedInterval = 256;

// Plain complex product; std::complex's operator* takes the slow NaN-recovery path.
inline Complex rotate(Complex a, Complex b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

struct DriveTerm {
    std::int64_t multiple;  // in units of the effective base
    double velocity_scale;  // amplitude * omega
    double phase;
};

}  // namespace

DriveSpec::DriveSpec(double base_frequency_hz, std::vector<Tone> tones)
    : base_frequency_hz_(base_frequency_hz), tones_(std::move(tones)) {
    if (!(base_frequency_hz > 0.0) || !std::isfinite(base_frequency_hz)) {
        throw InvalidParameter("base frequency must be > 0");
    }
    int pumps = 0;
    for (const Tone& t : tones_) {
        if (!(t.frequency_hz > 0.0)) throw InvalidParameter("tone frequency must be > 0");
        if (!(t.amplitude >= 0.0) || !std::isfinite(t.amplitude)) {
            throw InvalidParameter("tone amplitude must be finite and >= 0");
        }
        (void)grid_multiple(t.frequency_hz, base_frequency_hz_);
        if (t.role == ToneRole::pump) ++pumps;
    }
    if (pumps > 1) throw InvalidParameter("at most one pump tone is allowed");
}

std::int64_t DriveSpec::multiple(const Tone& tone) const {
    return grid_multiple(tone.frequency_hz, base_frequency_hz_);
}

std::optional<Tone> DriveSpec::pump() const {
    for (const Tone& t : tones_) {
        if (t.role == ToneRole::pump) return t;
    }
    return std::nullopt;
}

std::optional<Tone> DriveSpec::probe() const {
    for (const Tone& t : tones_) {
        if (t.role == ToneRole::probe) return t;
    }
    return std::nullopt;
}

std::int64_t grid_multiple(double frequency_hz, double base_f) {
    const double ratio = frequency_hz / base_f;
    const double m = std::round(ratio);
    if (m < 0.0 || std::abs(ratio - m) > 1e-9 * std::max(1.0, ratio)) {
        throw IncommensurateDrive("frequency " + std::to_string(frequency_hz) +
                                  " Hz is not an integer multiple of the base " +
                                  std::to_string(base_f) + " Hz");
    }
    return static_cast<std::int64_t>(m);
}

DriveSpec make_two_tone(double pump_f, double probe_detuning, double base_f, double pump_amp,
                        double probe_amp) {
    const double half = 0.5 * pump_f;
    (void)grid_multiple(pump_f, base_f);
    (void)grid_multiple(half + probe_detuning, base_f);
    (void)grid_multiple(half - probe_detuning, base_f);
    if (half - std::abs(probe_detuning) <= 0.0) {
        throw IncommensurateDrive("idler frequency must be positive");
    }
    return DriveSpec(base_f, {Tone{pump_f, pump_amp, 0.0, ToneRole::pump},
                              Tone{half + probe_detuning, probe_amp, 0.0, ToneRole::probe}});
}

double nonlinear_bracket(double phi, double junction_phase, int n_squids, Nonlinearity model) {
    const FluxBias bias{0.0, 0.0, 0.0, junction_phase * n_squids, 0.0};
    const CircuitParams unit(n_squids, 1.0, 1.0, 1.0, 1.0);
    return EomModel(unit, bias, model).bracket(phi);
}

StateDerivative eom_rhs(const CircuitParams& params, const FluxBias& bias, PhaseState state,
                        double drive_velocity, Nonlinearity model) {
    const EomModel eom(params, bias, model);
    return {state.dphi, eom.accel(state.phi, state.dphi, drive_velocity)};
}

const HarmonicEntry* SteadyStateSolution::find(double frequency_hz) const {
    for (const HarmonicEntry& h : harmonics) {
        if (std::abs(h.frequency_hz - frequency_hz) <= 1e-9 * std::max(1.0, frequency_hz)) {
            return &h;
        }
    }
    return nullptr;
}

const HarmonicEntry& SteadyStateSolution::at(double frequency_hz) const {
    const HarmonicEntry* h = find(frequency_hz);
    if (h == nullptr) {
        throw InvalidParameter("harmonic " + std::to_string(frequency_hz) + " Hz is not tracked");
    }
    return *h;
}

double SteadyStateSolution::power_imbalance() const {
    if (incoming_power_w == 0.0) return outgoing_power_w == 0.0 ? 0.0 : 1.0;
    return std::abs(outgoing_power_w - incoming_power_w) / incoming_power_w;
}

namespace {
SolutionObserver g_observer;
}  // namespace

void set_solution_observer(SolutionObserver observer) { g_observer = std::move(observer); }

SteadyStateSolution integrate_to_steady_state(const CircuitParams& params, const FluxBias& bias,
                                              const DriveSpec& drive, const SolverOptions& opts) {
    if (drive.tones().empty()) throw InvalidParameter("drive has no tones");
    if (opts.steps_per_pump_period < 8) throw InvalidParameter("steps_per_pump_period < 8");
    if (opts.min_common_periods < 2 || opts.max_common_periods < opts.min_common_periods) {
        throw InvalidParameter("need 2 <= min_common_periods <= max_common_periods");
    }

    // Tracked harmonics: every tone, the idler, twice the pump, and DC.
    std::vector<std::int64_t> tracked{0};
    std::optional<std::int64_t> pump_m;
    for (const Tone& t : drive.tones()) {
        tracked.push_back(drive.multiple(t));
        if (t.role == ToneRole::pump) pump_m = drive.multiple(t);
    }
    if (pump_m) {
        tracked.push_back(2 * *pump_m);
        for (const Tone& t : drive.tones()) {
            const std::int64_t m = drive.multiple(t);
            if (t.role == ToneRole::probe && *pump_m > m) tracked.push_back(*pump_m - m);
        }
    }
    tracked.insert(tracked.end(), opts.extra_harmonics.begin(), opts.extra_harmonics.end());
    std::sort(tracked.begin(), tracked.end());
    tracked.erase(std::unique(tracked.begin(), tracked.end()), tracked.end());

    // The motion is periodic with the gcd of every frequency involved.
    std::int64_t g = 0;
    for (std::int64_t m : tracked) g = std::gcd(g, m);
    if (g <= 0) throw InvalidParameter("drive has no nonzero frequency");

    const Tone& reference = [&]() -> const Tone& {
        const Tone* best = &drive.tones().front();
        for (const Tone& t : drive.tones()) {
            if (t.role == ToneRole::pump) return t;
            if (t.frequency_hz > best->frequency_hz) best = &t;
        }
        return *best;
    }();
    const std::int64_t ref_units = drive.multiple(reference) / g;
    if (drive.multiple(reference) % g != 0) throw IncommensurateDrive("reference tone off grid");

    const std::int64_t steps_per_ref = opts.steps_per_pump_period;
    const std::int64_t period_steps = steps_per_ref * ref_units;
    const double common_period = 1.0 / (drive.base_frequency_hz() * static_cast<double>(g));
    const double h = common_period / static_cast<double>(period_steps);

    std::int64_t warmup_periods = 0;
    if (opts.warmup_periods) {
        warmup_periods = *opts.warmup_periods;
    } else {
        const double q = quality_factor(params, bias);
        warmup_periods = static_cast<std::int64_t>(
            std::ceil(20.0 * q * std::sqrt(ratio_from_db(std::max(0.0, opts.target_gain_db)))));
    }
    const std::int64_t warmup_steps = std::max<std::int64_t>(0, warmup_periods) * steps_per_ref;

    std::vector<DriveTerm> terms;
    for (const Tone& t : drive.tones()) {
        if (t.amplitude == 0.0) continue;
        terms.push_back({drive.multiple(t) / g, t.amplitude * kTwoPi * t.frequency_hz, t.phase});
    }
    // Drive evaluated on a half-step grid: 2 * period_steps points per common period.
    const std::int64_t half_period = 2 * period_steps;
    std::vector<Complex> drive_phasor(terms.size());
    std::vector<Complex> drive_rotor(terms.size());
    for (std::size_t j = 0; j < terms.size(); ++j) {
        drive_rotor[j] = grid_phasor(terms[j].multiple, half_period);
    }
    auto reseed_drive = [&](std::int64_t half_index) {
        for (std::size_t j = 0; j < terms.size(); ++j) {
            drive_phasor[j] = grid_phasor(terms[j].multiple * (half_index % half_period),
                                          half_period, terms[j].phase);
        }
    };
    const std::size_t nh = tracked.size();
    std::vector<std::int64_t> harm_units(nh);
    for (std::size_t k = 0; k < nh; ++k) harm_units[k] = tracked[k] / g;
    std::vector<Complex> harm_rotor(nh);
    std::vector<Complex> harm_phasor(nh);
    for (std::size_t k = 0; k < nh; ++k) {
        harm_rotor[k] = std::conj(grid_phasor(harm_units[k], period_steps));
    }

    const EomModel eom(params, bias, opts.nonlinearity);
    const double alpha_w = kReducedFluxQuantum * kReducedFluxQuantum / (2.0 * params.r_env());

    std::ofstream dump;
    if (opts.trajectory_csv) {
        dump.open(*opts.trajectory_csv);
        if (!dump) throw Error("cannot open trajectory file " + opts.trajectory_csv->string());
        dump << "time_s,phi_rad,dphi_rad_per_s\n";
        dump.precision(17);
    }

    PhaseState state = opts.initial;
    std::int64_t n = 0;  // global step index; t = n h

    const std::size_t nt = terms.size();
    const double gamma2 = 2.0 * eom.gamma;
    const double divergence_limit = 1e6 * params.n_squids();

    // Hot loop. Works in blocks between exact phasor re-seeds; all state is kept in locals.
    auto run_steps = [&](std::int64_t count, Complex* acc, double* in_sq, double* out_sq) {
        double x = state.phi;
        double v = state.dphi;
        double sum_in = 0.0;
        double sum_out = 0.0;
        Complex* dp = drive_phasor.data();
        const Complex* dr = drive_rotor.data();
        Complex* hp = harm_phasor.data();
        const Complex* hr = harm_rotor.data();
        auto vin_advance = [&]() {
            double vin = 0.0;
            for (std::size_t j = 0; j < nt; ++j) {
                vin -= terms[j].velocity_scale * dp[j].imag();
                dp[j] = rotate(dp[j], dr[j]);
            }
            return vin;
        };
        double vin_now = 0.0;
        std::int64_t remaining = count;
        while (remaining > 0) {
            // Re-seed at every block boundary so each block starts from exact phasors.
            reseed_drive(2 * n);
            vin_now = vin_advance();
            if (acc != nullptr) {
                for (std::size_t k = 0; k < nh; ++k) {
                    hp[k] = std::conj(grid_phasor(harm_units[k] * (n % period_steps), period_steps));
                }
            }
            const std::int64_t block = std::min(remaining, kReseedInterval - n % kReseedInterval);
            for (std::int64_t i = 0; i < block; ++i, ++n) {
                if (acc != nullptr) {
                    for (std::size_t k = 0; k < nh; ++k) {
                        acc[k] += x * hp[k];
                        hp[k] = rotate(hp[k], hr[k]);
                    }
                    const double vout = v - vin_now;
                    sum_in += vin_now * vin_now;
                    sum_out += vout * vout;
                }
                if (dump.is_open() && n % opts.trajectory_stride == 0) {
                    dump << static_cast<double>(n) * h << ',' << x << ',' << v << '\n';
                }
                const double vin_mid = vin_advance();
                const double vin_end = vin_advance();
                const auto accel = [&](double t, double px, double pv) {
                    const double vin = t == 0.0 ? vin_now : (t == h ? vin_end : vin_mid);
                    return -eom.gamma * pv - eom.omega0_sq * px - eom.omega_j_sq * eom.bracket(px) +
                           gamma2 * vin;
                };
                const PhaseState next = rk4_step(accel, PhaseState{x, v}, 0.0, h);
                x = next.phi;
                v = next.dphi;
                vin_now = vin_end;
            }
            remaining -= block;
            if (!std::isfinite(x) || !std::isfinite(v) || std::abs(x) > divergence_limit) {
                throw DivergedTrajectory("trajectory diverged at t = " +
                                         std::to_string(static_cast<double>(n) * h) + " s");
            }
        }
        state = {x, v};
        if (in_sq != nullptr) *in_sq += sum_in;
        if (out_sq != nullptr) *out_sq += sum_out;
    };

    run_steps(warmup_steps, nullptr, nullptr, nullptr);

    SteadyStateSolution sol;
    sol.warmup_steps = warmup_steps;
    sol.steps_per_common_period = period_steps;
    sol.common_period_s = common_period;

    std::vector<Complex> previous;
    std::vector<Complex> current(nh);
    for (int p = 0; p < opts.max_common_periods; ++p) {
        std::fill(current.begin(), current.end(), Complex{});
        double in_sq = 0.0;
        double out_sq = 0.0;
        run_steps(period_steps, current.data(), &in_sq, &out_sq);
        const double inv = 1.0 / static_cast<double>(period_steps);
        for (std::size_t k = 0; k < nh; ++k) current[k] *= (harm_units[k] == 0 ? inv : 2.0 * inv);
        sol.periods_integrated = p + 1;
        sol.incoming_power_w = alpha_w * in_sq * inv;
        sol.outgoing_power_w = alpha_w * out_sq * inv;

        if (!previous.empty()) {
            double scale = 0.0;
            for (const Complex& c : current) scale = std::max(scale, std::abs(c));
            const double floor = std::max(1e-6 * scale, 1e-300);
            double residual = 0.0;
            for (std::size_t k = 0; k < nh; ++k) {
                residual = std::max(residual, std::abs(current[k] - previous[k]) /
                                                  std::max(std::abs(current[k]), floor));
            }
            sol.residual = residual;
            if (p + 1 >= opts.min_common_periods && residual < opts.tolerance) {
                sol.converged = true;
                break;
            }
        }
        previous = current;
    }

    if (!sol.converged && !opts.allow_unconverged) {
        throw NoConvergence("no periodic steady state after " +
                                std::to_string(sol.periods_integrated) +
                                " common periods (residual " + std::to_string(sol.residual) + ")",
                            sol.residual, sol.periods_integrated);
    }

    for (std::size_t k = 0; k < nh; ++k) {
        HarmonicEntry e;
        e.multiple = tracked[k];
        e.frequency_hz = static_cast<double>(tracked[k]) * drive.base_frequency_hz();
        e.node = current[k];
        for (const Tone& t : drive.tones()) {
            if (drive.multiple(t) == tracked[k]) e.incoming += std::polar(t.amplitude, t.phase);
        }
        e.outgoing = e.node - e.incoming;
        sol.harmonics.push_back(e);
    }
    if (g_observer) g_observer(sol);
    return sol;
}

double wave_power(double amplitude, double omega, double r_env) {
    const double v = kReducedFluxQuantum * omega * amplitude;
    return v * v / (2.0 * r_env);
}

double wave_power_dbm(double amplitude, double omega, double r_env) {
    return dbm_from_watts(wave_power(amplitude, omega, r_env));
}

double amplitude_for_power(double watts, double omega, double r_env) {
    if (!(omega > 0.0)) throw InvalidParameter("omega must be > 0");
    if (watts < 0.0) throw InvalidParameter("power must be >= 0");
    return std::sqrt(2.0 * r_env * watts) / (kReducedFluxQuantum * omega);
}

double amplitude_for_power_dbm(double dbm, double omega, double r_env) {
    return amplitude_for_power(watts_from_dbm(dbm), omega, r_env);
}

}  // namespace jpa
