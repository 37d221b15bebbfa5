#include "jpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "jpa/errors.hpp"
#include "jpa/parallel.hpp"
#include "jpa/units.hpp"

namespace jpa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Eval {
    double p = 0.0;
    double f = 0.0;  // objective minus target
    bool ok = false;
};

// Illinois variant of regula falsi. lo.f < 0 <= hi.f on entry; `fn` returns the objective
// minus target. Stops when |f| <= tol or the bracket is below min_width.
template <typename Fn>
Eval illinois(Fn&& fn, Eval lo, Eval hi, double tol, double min_width, int max_iter) {
    int side = 0;
    Eval best = std::abs(lo.f) < std::abs(hi.f) ? lo : hi;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(best.f) <= tol || std::abs(hi.p - lo.p) <= min_width) break;
        double p = hi.p - hi.f * (hi.p - lo.p) / (hi.f - lo.f);
        // keep the new point strictly inside the bracket
        const double w = hi.p - lo.p;
        const double lo_p = std::min(lo.p, hi.p) + 0.02 * std::abs(w);
        const double hi_p = std::max(lo.p, hi.p) - 0.02 * std::abs(w);
        if (!std::isfinite(p)) p = 0.5 * (lo.p + hi.p);
        p = std::clamp(p, lo_p, hi_p);
        const Eval e = fn(p);
        if (e.ok && std::abs(e.f) < std::abs(best.f)) best = e;
        if (!e.ok || e.f >= 0.0) {
            hi = e.ok ? e : Eval{p, std::max(1.0, std::abs(lo.f)), false};
            if (side == +1) lo.f *= 0.5;
            side = +1;
        } else {
            lo = e;
            if (side == -1) hi.f *= 0.5;
            side = -1;
        }
    }
    return best;
}

ProbeSetup checked(const ProbeSetup& probe) {
    if (!(probe.base_frequency_hz > 0.0)) throw InvalidParameter("base frequency must be > 0");
    if (probe.detuning_hz == 0.0) throw InvalidParameter("probe detuning must be nonzero");
    return probe;
}

double probe_frequency(double pump_hz, const ProbeSetup& probe) {
    return 0.5 * pump_hz + probe.detuning_hz;
}

}  // namespace

double pump_frequency_for(const FluxBias& bias, const ProbeSetup& probe) {
    if (probe.pump_frequency_hz) return *probe.pump_frequency_hz;
    const double f0 = bias.omega0 / kTwoPi;
    const double half = std::round(f0 / probe.base_frequency_hz) * probe.base_frequency_hz;
    return 2.0 * half;
}

GainMeasurement measure_gain(const CircuitParams& params, const FluxBias& bias,
                             double pump_frequency_hz, double pump_power_dbm,
                             double probe_frequency_hz, double probe_power_dbm,
                             double base_frequency_hz, const SolverOptions& solver) {
    const double wp = kTwoPi * pump_frequency_hz;
    const double ws = kTwoPi * probe_frequency_hz;
    const double r = params.r_env();
    const double pump_amp = amplitude_for_power_dbm(pump_power_dbm, wp, r);
    const double probe_amp = amplitude_for_power_dbm(probe_power_dbm, ws, r);
    if (!(probe_amp > 0.0)) throw InvalidParameter("probe power must be finite");

    const DriveSpec drive = make_two_tone(pump_frequency_hz,
                                          probe_frequency_hz - 0.5 * pump_frequency_hz,
                                          base_frequency_hz, pump_amp, probe_amp);
    SteadyStateSolution sol;
    try {
        sol = integrate_to_steady_state(params, bias, drive, solver);
    } catch (const DivergedTrajectory& e) {
        throw DivergedTrajectory(e.what(), pump_power_dbm);
    }

    const double idler_hz = pump_frequency_hz - probe_frequency_hz;
    const double wi = kTwoPi * idler_hz;
    const double out_s = std::norm(sol.at(probe_frequency_hz).outgoing);
    const double out_i = std::norm(sol.at(idler_hz).outgoing);
    const double in_s = probe_amp * probe_amp;

    GainMeasurement m;
    m.pump_frequency_hz = pump_frequency_hz;
    m.probe_frequency_hz = probe_frequency_hz;
    m.pump_power_dbm = pump_power_dbm;
    m.core_pump_power_dbm = wave_power_dbm(std::abs(sol.at(pump_frequency_hz).node), wp, r);
    m.probe_power_dbm = probe_power_dbm;
    m.gain_db = db_from_ratio(out_s / in_s);
    m.output_power_dbm = wave_power_dbm(std::sqrt(out_s), ws, r);
    m.idler_gain_db = db_from_ratio(out_i * wi * wi / (in_s * ws * ws));
    m.signal_minus_idler = out_s / in_s - (wi / ws) * out_i / in_s;
    m.power_imbalance = sol.power_imbalance();
    m.converged = sol.converged;
    return m;
}

double threshold_pump_estimate_dbm(const CircuitParams& params, const FluxBias& bias,
                                   double pump_frequency_hz) {
    const double c3 = std::abs(taylor_coefficients(params, bias).c3);
    if (!(c3 > 0.0)) throw InvalidParameter("bias has no three-wave nonlinearity (c3 = 0)");
    const double gamma = params.gamma();
    const double w0 = bias.omega0;
    const double wp = kTwoPi * pump_frequency_hz;
    // Node amplitude at which 2 c3 phi_p modulates w0^2 at the Mathieu threshold 2 gamma / w0.
    const double node = gamma * w0 / c3;
    const double incident =
        node * std::abs(Complex(w0 * w0 - wp * wp, gamma * wp)) / (2.0 * gamma * wp);
    return wave_power_dbm(incident, wp, params.r_env());
}

PumpOperatingPoint tune_pump(const CircuitParams& params, const FluxBias& bias,
                             double target_gain_db, const ProbeSetup& probe_in,
                             const TuneCaps& caps, const SolverOptions& solver) {
    const ProbeSetup probe = checked(probe_in);
    if (!(caps.coarse_step_db > 0.0) || !(caps.tolerance_db > 0.0)) {
        throw InvalidParameter("tune caps must have positive step and tolerance");
    }
    const double fp = pump_frequency_for(bias, probe);
    const double fs = probe_frequency(fp, probe);

    PumpOperatingPoint out;
    out.pump_frequency_hz = fp;

    auto measure = [&](double pump_dbm) {
        return measure_gain(params, bias, fp, pump_dbm, fs, probe.probe_power_dbm,
                            probe.base_frequency_hz, solver);
    };

    if (target_gain_db <= 0.0) {
        out.measurement = measure(-kInf);
        out.pump_power_dbm = -kInf;
        out.core_pump_power_dbm = -kInf;
        out.achieved_gain_db = 0.0;
        return out;
    }

    int evaluations = 0;
    std::vector<GainMeasurement> measured;
    double best_gain = -kInf;
    double best_gain_at = -kInf;

    auto evaluate = [&](double pump_dbm) -> Eval {
        ++evaluations;
        try {
            const GainMeasurement m = measure(pump_dbm);
            out.samples.push_back({pump_dbm, m.gain_db});
            if (m.gain_db > best_gain) {
                best_gain = m.gain_db;
                best_gain_at = pump_dbm;
            }
            measured.push_back(m);
            return {pump_dbm, m.gain_db - target_gain_db, true};
        } catch (const NoConvergence&) {
            // No periodic state: counts as lost gain for the search.
            out.samples.push_back({pump_dbm, -kInf});
            return {pump_dbm, -kInf, false};
        }
    };

    auto finish = [&](Eval lo, Eval hi) {
        const double tol = 0.5 * caps.tolerance_db;
        const Eval hit =
            illinois(evaluate, lo, hi, tol, 1e-6, std::max(4, caps.max_evaluations - evaluations));
        const auto it = std::find_if(measured.begin(), measured.end(), [&](const auto& m) {
            return m.pump_power_dbm == hit.p;
        });
        if (it == measured.end()) throw Error("tune_pump: lost track of the refined sample");
        const GainMeasurement m = *it;
        if (std::abs(m.gain_db - target_gain_db) > caps.tolerance_db) {
            throw NoConvergence("pump refinement did not reach the target within tolerance",
                                m.gain_db - target_gain_db, evaluations);
        }
        out.measurement = m;
        out.pump_power_dbm = m.pump_power_dbm;
        out.core_pump_power_dbm = m.core_pump_power_dbm;
        out.achieved_gain_db = m.gain_db;
        return out;
    };

    const double threshold = threshold_pump_estimate_dbm(params, bias, fp);
    const double step = caps.coarse_step_db;
    const double p_max = threshold + caps.max_above_threshold_db;
    double p = threshold - caps.start_below_threshold_db;

    Eval first = evaluate(p);
    // Started above the target: walk down until the gain is below it.
    if (first.ok && first.f >= 0.0) {
        Eval hi = first;
        for (int i = 0; i < 40; ++i) {
            const Eval e = evaluate(hi.p - 3.0 * step);
            if (e.ok && e.f < 0.0) return finish(e, hi);
            hi = e.ok ? e : hi;
        }
        throw MaxGainBelowTarget(best_gain, best_gain_at);
    }

    std::vector<Eval> coarse{first};
    while (evaluations < caps.max_evaluations) {
        p += step;
        if (p > p_max) break;
        const Eval e = evaluate(p);
        const Eval prev = coarse.back();
        coarse.push_back(e);
        if (e.ok && e.f >= 0.0) return finish(prev, e);
        if (!e.ok || (prev.ok && e.f < prev.f)) {
            // Turnover: the gain maximum lies in (p - 2 step, p). Golden-section search for it;
            // any point at or above the target opens a bracket on the rising side.
            const double g = (std::sqrt(5.0) - 1.0) / 2.0;
            Eval lower = coarse.size() >= 3 ? coarse[coarse.size() - 3] : Eval{prev.p - step, -kInf, false};
            double a = lower.p;
            double b = e.p;
            double x1 = b - g * (b - a);
            double x2 = a + g * (b - a);
            Eval e1 = evaluate(x1);
            Eval e2 = evaluate(x2);
            Eval below = lower.ok ? lower : (prev.ok ? prev : lower);
            for (int it = 0; it < 10 && evaluations < caps.max_evaluations; ++it) {
                for (const Eval* h : std::initializer_list<const Eval*>{&e1, &e2}) {
                    if (h->ok && h->f >= 0.0) {
                        // rising-side lower point: the largest evaluated p below h with f < 0
                        Eval lo_pt{-kInf, -kInf, false};
                        for (const Eval* c : std::initializer_list<const Eval*>{&lower, &prev, &e1, &e2}) {
                            if (c->ok && c->f < 0.0 && c->p < h->p && c->p > lo_pt.p) lo_pt = *c;
                        }
                        if (!lo_pt.ok) lo_pt = below;
                        return finish(lo_pt, *h);
                    }
                }
                if (e1.f >= e2.f) {
                    b = x2;
                    x2 = x1;
                    e2 = e1;
                    x1 = b - g * (b - a);
                    e1 = evaluate(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    e1 = e2;
                    x2 = a + g * (b - a);
                    e2 = evaluate(x2);
                }
                if (b - a < caps.tolerance_db) break;
            }
            throw MaxGainBelowTarget(best_gain, best_gain_at);
        }
    }
    throw MaxGainBelowTarget(best_gain, best_gain_at);
}

GainMeasurement refine_pump_power(const CircuitParams& params, const FluxBias& bias,
                                  double target_gain_db, GainSample lo, GainSample hi,
                                  double tolerance_db, const ProbeSetup& probe_in,
                                  const SolverOptions& solver) {
    const ProbeSetup probe = checked(probe_in);
    if (!(lo.gain_db < target_gain_db && hi.gain_db >= target_gain_db)) {
        throw InvalidParameter("refine_pump_power needs gain(lo) < target <= gain(hi)");
    }
    const double fp = pump_frequency_for(bias, probe);
    const double fs = probe_frequency(fp, probe);
    std::vector<GainMeasurement> measured;
    auto evaluate = [&](double pump_dbm) -> Eval {
        try {
            measured.push_back(measure_gain(params, bias, fp, pump_dbm, fs,
                                            probe.probe_power_dbm, probe.base_frequency_hz,
                                            solver));
            return {pump_dbm, measured.back().gain_db - target_gain_db, true};
        } catch (const NoConvergence&) {
            return {pump_dbm, -kInf, false};
        }
    };
    const Eval hit = illinois(evaluate, {lo.pump_power_dbm, lo.gain_db - target_gain_db, true},
                              {hi.pump_power_dbm, hi.gain_db - target_gain_db, true},
                              0.5 * tolerance_db, 1e-6, 40);
    const auto it = std::find_if(measured.begin(), measured.end(), [&](const auto& m) {
        return m.pump_power_dbm == hit.p;
    });
    if (it == measured.end() || std::abs(it->gain_db - target_gain_db) > tolerance_db) {
        // An endpoint was already closest; measure it so the caller gets a full record.
        const GainMeasurement m = measure_gain(params, bias, fp, hit.p, fs, probe.probe_power_dbm,
                                               probe.base_frequency_hz, solver);
        if (std::abs(m.gain_db - target_gain_db) > tolerance_db) {
            throw NoConvergence("pump refinement did not reach the target within tolerance",
                                m.gain_db - target_gain_db, static_cast<long>(measured.size()));
        }
        return m;
    }
    return *it;
}

GainCurve gain_curve(const CircuitParams& params, const FluxBias& bias, double pump_power_dbm,
                     std::span<const double> detuning_grid_hz, const ProbeSetup& probe_in,
                     const SolverOptions& solver) {
    const ProbeSetup probe = checked(probe_in);
    const double fp = pump_frequency_for(bias, probe);
    for (double d : detuning_grid_hz) {
        if (d == 0.0) throw InvalidParameter("gain curve detunings must be nonzero");
    }

    GainCurve curve;
    curve.bias = bias;
    curve.pump_frequency_hz = fp;
    curve.pump_power_dbm = pump_power_dbm;
    curve.points.resize(detuning_grid_hz.size());
    parallel_for(detuning_grid_hz.size(), [&](std::size_t i) {
        const double fs = 0.5 * fp + detuning_grid_hz[i];
        const GainMeasurement m = measure_gain(params, bias, fp, pump_power_dbm, fs,
                                               probe.probe_power_dbm, probe.base_frequency_hz,
                                               solver);
        curve.points[i] = {fs, m.gain_db};
    });
    std::sort(curve.points.begin(), curve.points.end(),
              [](const GainCurvePoint& a, const GainCurvePoint& b) {
                  return a.probe_frequency_hz < b.probe_frequency_hz;
              });
    if (curve.points.empty()) return curve;

    const auto peak = std::max_element(
        curve.points.begin(), curve.points.end(),
        [](const GainCurvePoint& a, const GainCurvePoint& b) { return a.gain_db < b.gain_db; });
    curve.peak_gain_db = peak->gain_db;
    const double level = curve.peak_gain_db - 3.0;
    const auto k = static_cast<std::size_t>(peak - curve.points.begin());
    auto cross = [&](std::size_t inside, std::size_t outside) {
        const GainCurvePoint& a = curve.points[inside];
        const GainCurvePoint& b = curve.points[outside];
        const double t = (a.gain_db - level) / (a.gain_db - b.gain_db);
        return a.probe_frequency_hz + t * (b.probe_frequency_hz - a.probe_frequency_hz);
    };
    std::optional<double> left;
    std::optional<double> right;
    for (std::size_t i = k; i > 0; --i) {
        if (curve.points[i - 1].gain_db <= level) {
            left = cross(i, i - 1);
            break;
        }
    }
    for (std::size_t i = k; i + 1 < curve.points.size(); ++i) {
        if (curve.points[i + 1].gain_db <= level) {
            right = cross(i, i + 1);
            break;
        }
    }
    if (left && right) {
        curve.bandwidth_3db_hz = *right - *left;
        curve.gbw_hz = std::sqrt(ratio_from_db(curve.peak_gain_db)) * *curve.bandwidth_3db_hz;
    }
    return curve;
}

SaturationResult compression_from_sweep(std::vector<SaturationPoint> sweep) {
    if (sweep.empty()) throw InvalidParameter("empty saturation sweep");
    std::stable_sort(sweep.begin(), sweep.end(), [](const auto& a, const auto& b) {
        return a.input_power_dbm < b.input_power_dbm;
    });
    SaturationResult res;
    res.small_signal_gain_db = sweep.front().gain_db;
    const double level = res.small_signal_gain_db - 1.0;
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        if (sweep[i].gain_db <= level && sweep[i - 1].gain_db > level) {
            const SaturationPoint& a = sweep[i - 1];
            const SaturationPoint& b = sweep[i];
            const double t = (a.gain_db - level) / (a.gain_db - b.gain_db);
            res.input_p1db_dbm = a.input_power_dbm + t * (b.input_power_dbm - a.input_power_dbm);
            res.output_p1db_dbm = res.input_p1db_dbm + level;
            res.sweep = std::move(sweep);
            return res;
        }
    }
    throw NoCompressionInRange(sweep.back().input_power_dbm);
}

SaturationResult saturation_sweep(const CircuitParams& params, const FluxBias& bias,
                                  double pump_power_dbm, double probe_frequency_hz,
                                  std::span<const double> input_powers_dbm,
                                  const ProbeSetup& probe, const SolverOptions& solver) {
    const double fp = pump_frequency_for(bias, probe);
    std::vector<SaturationPoint> sweep(input_powers_dbm.size());
    parallel_for(input_powers_dbm.size(), [&](std::size_t i) {
        const GainMeasurement m = measure_gain(params, bias, fp, pump_power_dbm,
                                               probe_frequency_hz, input_powers_dbm[i],
                                               probe.base_frequency_hz, solver);
        sweep[i] = {input_powers_dbm[i], m.gain_db};
    });
    return compression_from_sweep(std::move(sweep));
}

SaturationResult find_p1db(const CircuitParams& params, const FluxBias& bias,
                           double pump_power_dbm, double probe_frequency_hz,
                           double small_signal_gain_db, const AdaptiveSaturationOptions& opts,
                           const ProbeSetup& probe, const SolverOptions& solver) {
    if (!(opts.coarse_step_db > 0.0)) throw InvalidParameter("coarse step must be > 0");
    const double fp = pump_frequency_for(bias, probe);
    const double level = small_signal_gain_db - 1.0;
    std::vector<SaturationPoint> sweep;
    auto evaluate = [&](double pin) -> Eval {
        const GainMeasurement m = measure_gain(params, bias, fp, pump_power_dbm,
                                               probe_frequency_hz, pin,
                                               probe.base_frequency_hz, solver);
        sweep.push_back({pin, m.gain_db});
        return {pin, level - m.gain_db, true};  // rises through zero as the gain compresses
    };

    Eval prev{};
    bool have_prev = false;
    for (double pin = opts.start_dbm; pin <= opts.stop_dbm + 1e-9; pin += opts.coarse_step_db) {
        const Eval e = evaluate(pin);
        if (e.f >= 0.0) {
            if (!have_prev) {
                throw InvalidParameter("gain already compressed at the first sweep power");
            }
            const Eval hit = illinois(evaluate, prev, e, opts.tolerance_db, 1e-6, 30);
            SaturationResult res;
            res.small_signal_gain_db = small_signal_gain_db;
            res.input_p1db_dbm = hit.p;
            res.output_p1db_dbm = res.input_p1db_dbm + level;
            std::stable_sort(sweep.begin(), sweep.end(), [](const auto& a, const auto& b) {
                return a.input_power_dbm < b.input_power_dbm;
            });
            res.sweep = std::move(sweep);
            return res;
        }
        prev = e;
        have_prev = true;
    }
    throw NoCompressionInRange(sweep.empty() ? opts.start_dbm : sweep.back().input_power_dbm);
}

double pump_added_efficiency(const SaturationResult& sat, double pump_power_dbm) {
    return (watts_from_dbm(sat.output_p1db_dbm) - watts_from_dbm(sat.input_p1db_dbm)) /
           watts_from_dbm(pump_power_dbm);
}

double pump_added_efficiency_approx(const SaturationResult& sat, double pump_power_dbm) {
    return watts_from_dbm(sat.output_p1db_dbm) / watts_from_dbm(pump_power_dbm);
}

}  // namespace jpa
