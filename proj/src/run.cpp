#include "jpa/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "jpa/analysis.hpp"
#include "jpa/coupling.hpp"
#include "jpa/design_space.hpp"
#include "jpa/errors.hpp"
#include "jpa/format.hpp"
#include "jpa/parallel.hpp"
#include "jpa/units.hpp"

#ifndef JPA_VERSION
#define JPA_VERSION "0.0.0"
#endif

namespace jpa {

using nlohmann::json;

const char* version_string() { return JPA_VERSION; }

ResolvedDevice resolve_device(const CircuitConfig& c, std::optional<double> phi_e) {
    const double ls = henries_from_ph(c.l_shunt);
    const double lj = henries_from_ph(c.l_junction);
    std::optional<double> cc;
    if (c.c_coupling) cc = farads_from_pf(*c.c_coupling);
    if (c.c_main) {
        CircuitParams p(c.n_squids, ls, lj, farads_from_pf(*c.c_main), *c.r_env, cc);
        return {p, phi_e ? solve_dc_phase(p, *phi_e) : max_c3_bias(p)};
    }
    BiasStrategy strategy;
    if (phi_e) strategy = {BiasStrategy::Kind::fixed, *phi_e};
    const DesignFamily fam =
        build_family(ls, *c.q_target, FamilySpec{lj, c.n_squids, *c.f0_target * kGiga}, strategy);
    CircuitParams p(c.n_squids, ls, lj, fam.params.c_main(), fam.params.r_env(), cc);
    return {p, fam.bias};
}

SolverOptions solver_options(const RunConfig& config) {
    SolverOptions s;
    s.steps_per_pump_period = config.solver.steps_per_pump_period;
    s.tolerance = config.solver.tolerance;
    s.warmup_periods = config.solver.warmup_periods;
    s.min_common_periods = config.solver.min_common_periods;
    s.max_common_periods = config.solver.max_common_periods;
    s.target_gain_db = config.task.target_gain_db;
    return s;
}

ProbeSetup probe_setup(const RunConfig& config) {
    ProbeSetup p;
    p.probe_power_dbm = config.task.probe_power_dbm;
    p.detuning_hz = config.task.probe_detuning_mhz * kMega;
    p.base_frequency_hz = config.solver.base_frequency_mhz * kMega;
    if (config.task.pump_frequency_ghz) p.pump_frequency_hz = *config.task.pump_frequency_ghz * kGiga;
    return p;
}

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

TuneCaps tune_caps(const TaskConfig& t) {
    TuneCaps c;
    c.tolerance_db = t.tolerance_db;
    c.start_below_threshold_db = t.start_below_threshold_db;
    c.coarse_step_db = t.coarse_step_db;
    c.max_above_threshold_db = t.max_above_threshold_db;
    return c;
}

AdaptiveSaturationOptions saturation_options(const TaskConfig& t) {
    AdaptiveSaturationOptions s;
    s.start_dbm = t.saturation_start_dbm;
    s.coarse_step_db = t.saturation_step_db;
    s.stop_dbm = t.saturation_stop_dbm;
    return s;
}

json device_json(const ResolvedDevice& d) {
    const CircuitParams& p = d.params;
    return {{"n_squids", p.n_squids()},
            {"l_shunt_ph", ph_from_henries(p.l_shunt())},
            {"l_junction_ph", ph_from_henries(p.l_junction())},
            {"beta", p.beta()},
            {"c_main_pf", pf_from_farads(p.c_main())},
            {"r_env_ohm", p.r_env()},
            {"phi_e", d.bias.phi_e},
            {"delta_phi_per_squid", d.bias.junction_phase(p.n_squids())},
            {"l_array_ph", ph_from_henries(array_inductance(p, d.bias))},
            {"f0_hz", resonant_frequency(p, d.bias) / kTwoPi},
            {"q", quality_factor(p, d.bias)}};
}

json measurement_json(const GainMeasurement& m) {
    return {{"pump_frequency_hz", m.pump_frequency_hz},
            {"probe_frequency_hz", m.probe_frequency_hz},
            {"pump_power_dbm", num(m.pump_power_dbm)},
            {"core_pump_power_dbm", num(m.core_pump_power_dbm)},
            {"probe_power_dbm", m.probe_power_dbm},
            {"gain_db", num(m.gain_db)},
            {"output_power_dbm", num(m.output_power_dbm)},
            {"idler_gain_db", num(m.idler_gain_db)},
            {"signal_minus_idler", num(m.signal_minus_idler)},
            {"power_imbalance", num(m.power_imbalance)},
            {"converged", m.converged}};
}

class OutputDir {
public:
    OutputDir(const OutputConfig& cfg, RunOutcome& outcome)
        : dir_(cfg.directory), outcome_(outcome) {
        csv_ = std::find(cfg.formats.begin(), cfg.formats.end(), "csv") != cfg.formats.end();
        json_ = std::find(cfg.formats.begin(), cfg.formats.end(), "json") != cfg.formats.end();
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IoError(dir_.string(), "cannot create output directory: " + ec.message());
    }

    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
        if (csv_) write(name, body);
    }
    void json_file(const std::string& name, const json& j) {
        if (json_) write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }
    void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
        const auto path = dir_ / name;
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError(path.string(), "cannot open for writing");
        body(os);
        os.flush();
        if (!os) throw IoError(path.string(), "write failed");
        if (std::find(outcome_.files.begin(), outcome_.files.end(), name) == outcome_.files.end()) {
            outcome_.files.push_back(name);
        }
    }
    [[nodiscard]] const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    RunOutcome& outcome_;
    bool csv_ = true;
    bool json_ = true;
};

// ---- tasks

void task_dc(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    const TaylorCoefficients t = taylor_coefficients(d.params, d.bias);
    json s = device_json(d);
    s["phi_dc"] = d.bias.phi_dc;
    s["delta_phi"] = d.bias.delta_phi;
    s["c2"] = t.c2;
    s["c3"] = t.c3;
    s["c4"] = t.c4;
    s["max_c3_phi_e"] = max_c3_bias(d.params).phi_e;
    res.summary = s;
    out.json_file("dc.json", s);
    if (!cfg.task.phi_e_grid.empty()) {
        const auto curve = tunability_curve(d.params, cfg.task.phi_e_grid);
        out.csv("tunability.csv", [&](std::ostream& os) {
            os << "phi_e,f0_hz,l_array_ph\n";
            for (const TunabilityPoint& p : curve) {
                os << format_number(p.phi_e) << ',' << format_number(p.f0_hz) << ','
                   << format_number(ph_from_henries(p.l_array)) << '\n';
            }
        });
    }
}

struct PumpChoice {
    double pump_frequency_hz = 0.0;
    double pump_power_dbm = 0.0;
    GainMeasurement measurement;
    std::optional<PumpOperatingPoint> tuned;
};

// Uses the configured pump power if given, else tunes onto the target gain.
PumpChoice choose_pump(const RunConfig& cfg, const ResolvedDevice& d) {
    const ProbeSetup probe = probe_setup(cfg);
    const SolverOptions solver = solver_options(cfg);
    PumpChoice c;
    c.pump_frequency_hz = pump_frequency_for(d.bias, probe);
    if (cfg.task.pump_power_dbm) {
        c.pump_power_dbm = *cfg.task.pump_power_dbm;
        c.measurement = measure_gain(d.params, d.bias, c.pump_frequency_hz, c.pump_power_dbm,
                                     c.pump_frequency_hz / 2.0 + probe.detuning_hz,
                                     probe.probe_power_dbm, probe.base_frequency_hz, solver);
    } else {
        c.tuned = tune_pump(d.params, d.bias, cfg.task.target_gain_db, probe, tune_caps(cfg.task),
                            solver);
        c.pump_power_dbm = c.tuned->pump_power_dbm;
        c.measurement = c.tuned->measurement;
    }
    return c;
}

void task_tune(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    const PumpOperatingPoint op = tune_pump(d.params, d.bias, cfg.task.target_gain_db,
                                            probe_setup(cfg), tune_caps(cfg.task),
                                            solver_options(cfg));
    json s = {{"device", device_json(d)},
              {"target_gain_db", cfg.task.target_gain_db},
              {"pump_frequency_hz", op.pump_frequency_hz},
              {"pump_power_dbm", num(op.pump_power_dbm)},
              {"core_pump_power_dbm", num(op.core_pump_power_dbm)},
              {"achieved_gain_db", op.achieved_gain_db},
              {"threshold_estimate_dbm",
               threshold_pump_estimate_dbm(d.params, d.bias, op.pump_frequency_hz)},
              {"measurement", measurement_json(op.measurement)}};
    res.summary = s;
    out.json_file("tune.json", s);
    out.csv("tune_samples.csv", [&](std::ostream& os) {
        os << "pump_power_dbm,gain_db\n";
        for (const GainSample& g : op.samples) {
            os << format_number(g.pump_power_dbm) << ',' << format_number(g.gain_db) << '\n';
        }
    });
}

void task_gain(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    const PumpChoice pump = choose_pump(cfg, d);
    std::vector<double> detunings;
    for (double mhz : cfg.task.detuning_grid_mhz) detunings.push_back(mhz * kMega);
    const GainCurve curve = gain_curve(d.params, d.bias, pump.pump_power_dbm, detunings,
                                       probe_setup(cfg), solver_options(cfg));
    json s = {{"device", device_json(d)},
              {"pump_frequency_hz", curve.pump_frequency_hz},
              {"pump_power_dbm", num(curve.pump_power_dbm)},
              {"peak_gain_db", num(curve.peak_gain_db)},
              {"bandwidth_3db_hz", num(curve.bandwidth_3db_hz)},
              {"gbw_hz", num(curve.gbw_hz)}};
    res.summary = s;
    out.json_file("gain.json", s);
    out.csv("gain_curve.csv", [&](std::ostream& os) {
        os << "probe_frequency_hz,detuning_hz,gain_db\n";
        for (const GainCurvePoint& p : curve.points) {
            os << format_number(p.probe_frequency_hz) << ','
               << format_number(p.probe_frequency_hz - curve.pump_frequency_hz / 2.0) << ','
               << format_number(p.gain_db) << '\n';
        }
    });
}

void task_saturate(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    const ProbeSetup probe = probe_setup(cfg);
    const SolverOptions solver = solver_options(cfg);
    const PumpChoice pump = choose_pump(cfg, d);
    const double fs = pump.measurement.probe_frequency_hz;
    SaturationResult sat;
    if (!cfg.task.input_powers_dbm.empty()) {
        sat = saturation_sweep(d.params, d.bias, pump.pump_power_dbm, fs, cfg.task.input_powers_dbm,
                               probe, solver);
    } else {
        sat = find_p1db(d.params, d.bias, pump.pump_power_dbm, fs, pump.measurement.gain_db,
                        saturation_options(cfg.task), probe, solver);
    }
    const double core = pump.measurement.core_pump_power_dbm;
    json s = {{"device", device_json(d)},
              {"pump_frequency_hz", pump.pump_frequency_hz},
              {"pump_power_dbm", num(pump.pump_power_dbm)},
              {"core_pump_power_dbm", num(core)},
              {"small_signal_gain_db", num(sat.small_signal_gain_db)},
              {"input_p1db_dbm", num(sat.input_p1db_dbm)},
              {"output_p1db_dbm", num(sat.output_p1db_dbm)},
              {"eta_pae", num(pump_added_efficiency(sat, core))},
              {"eta_pae_db", num(db_from_ratio(pump_added_efficiency(sat, core)))}};
    res.summary = s;
    out.json_file("saturation.json", s);
    std::vector<SaturationPoint> sweep = sat.sweep;
    std::stable_sort(sweep.begin(), sweep.end(), [](const auto& a, const auto& b) {
        return a.input_power_dbm < b.input_power_dbm;
    });
    out.csv("saturation.csv", [&](std::ostream& os) {
        os << "input_power_dbm,gain_db\n";
        for (const SaturationPoint& p : sweep) {
            os << format_number(p.input_power_dbm) << ',' << format_number(p.gain_db) << '\n';
        }
    });
}

void task_map(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const TaskConfig& t = cfg.task;
    const FamilySpec fixed{henries_from_ph(t.l_junction), t.n_squids, t.f0_target * kGiga};
    DesignMapOptions opts;
    opts.target_gain_db = t.target_gain_db;
    if (t.phi_e) opts.bias = {BiasStrategy::Kind::fixed, *t.phi_e};
    opts.probe = probe_setup(cfg);
    opts.caps = tune_caps(t);
    opts.saturation = saturation_options(t);
    opts.solver = solver_options(cfg);

    std::vector<CellSpec> cells;
    ColumnAxis axis = ColumnAxis::l_shunt;
    if (!t.l_shunt_grid.empty()) {
        std::vector<double> ls;
        for (double v : t.l_shunt_grid) ls.push_back(henries_from_ph(v));
        cells = grid_cells(ls, t.q_grid);
    } else {
        cells = inverse_beta_q_cells(t.inv_beta_q_grid, t.q_grid, fixed);
        axis = ColumnAxis::inv_beta_q;
    }
    const std::vector<DesignMapCell> map = design_map(cells, fixed, opts);
    out.csv("cells.csv", [&](std::ostream& os) { write_cells_csv(os, map); });

    int n_ok = 0, n_no = 0, n_div = 0;
    std::optional<double> p1_min, p1_max, ok_edge, fail_edge;
    for (const DesignMapCell& c : map) {
        if (c.status == CellStatus::ok) {
            ++n_ok;
            ok_edge = std::max(ok_edge.value_or(c.inv_beta_q), c.inv_beta_q);
            if (c.input_p1db_dbm) {
                p1_min = std::min(p1_min.value_or(*c.input_p1db_dbm), *c.input_p1db_dbm);
                p1_max = std::max(p1_max.value_or(*c.input_p1db_dbm), *c.input_p1db_dbm);
            }
        } else {
            c.status == CellStatus::no_20db ? ++n_no : ++n_div;
            fail_edge = std::min(fail_edge.value_or(c.inv_beta_q), c.inv_beta_q);
        }
    }
    const EfficiencyTables tables = efficiency_maps(map, axis);
    auto table_json = [](const std::vector<std::vector<std::optional<double>>>& rows) {
        json j = json::array();
        for (const auto& row : rows) {
            json r = json::array();
            for (const auto& v : row) r.push_back(num(v));
            j.push_back(r);
        }
        return j;
    };
    res.summary = {{"cells", map.size()},
                   {"ok", n_ok},
                   {"no_20db", n_no},
                   {"diverged", n_div},
                   {"largest_ok_inv_beta_q", num(ok_edge)},
                   {"smallest_failed_inv_beta_q", num(fail_edge)},
                   {"input_p1db_min_dbm", num(p1_min)},
                   {"input_p1db_max_dbm", num(p1_max)},
                   {"input_p1db_spread_db",
                    p1_min ? num(*p1_max - *p1_min) : json(nullptr)},
                   {"efficiency_tables",
                    {{"column_axis", axis == ColumnAxis::l_shunt ? "l_shunt" : "inv_beta_q"},
                     {"q_axis", tables.q_axis},
                     {"columns", tables.column_axis},
                     {"pump_power_dbm", table_json(tables.pump_power_dbm)},
                     {"eta_pae_db", table_json(tables.eta_pae_db)}}}};
    // no_20db is a valid physics outcome; only cells that could not be evaluated count as failed
    if (n_div > 0) res.exit_code = kExitMapFailures;
}

void task_biasmap(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    BiasMapOptions opts;
    opts.probe = probe_setup(cfg);
    opts.probe.pump_frequency_hz.reset();
    opts.solver = solver_options(cfg);
    opts.saturation = saturation_options(cfg.task);
    opts.refine_tolerance_db = cfg.task.tolerance_db;
    opts.along_branch = cfg.task.along_branch;
    const BiasContour contour = bias_pump_map(d.params, cfg.task.phi_e_grid,
                                              cfg.task.pump_power_grid_dbm,
                                              cfg.task.target_gain_db, opts);
    out.csv("bias_grid.csv", [&](std::ostream& os) { write_bias_grid_csv(os, contour); });
    out.csv("branches.csv", [&](std::ostream& os) { write_branch_csv(os, contour); });

    std::optional<double> pmin, pmax, smin, smax;
    for (const AlongBranchPoint& p : contour.along_branch) {
        pmin = std::min(pmin.value_or(p.pump_power_dbm), p.pump_power_dbm);
        pmax = std::max(pmax.value_or(p.pump_power_dbm), p.pump_power_dbm);
        if (p.input_p1db_dbm) {
            smin = std::min(smin.value_or(*p.input_p1db_dbm), *p.input_p1db_dbm);
            smax = std::max(smax.value_or(*p.input_p1db_dbm), *p.input_p1db_dbm);
        }
    }
    int invalid = 0;
    for (const BiasGridPoint& g : contour.grid) invalid += g.valid ? 0 : 1;
    res.summary = {{"device", device_json(d)},
                   {"grid_points", contour.grid.size()},
                   {"invalid_grid_points", invalid},
                   {"low_branch_points", contour.low_branch.size()},
                   {"high_branch_points", contour.high_branch.size()},
                   {"along_branch_points", contour.along_branch.size()},
                   {"pump_power_range_db", pmin ? num(*pmax - *pmin) : json(nullptr)},
                   {"input_p1db_range_db", smin ? num(*smax - *smin) : json(nullptr)}};
}

void task_pce(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const ResolvedDevice d = resolve_device(*cfg.circuit, cfg.task.phi_e);
    const double l_arr = array_inductance(d.params, d.bias);
    const ReactiveNetwork net =
        capacitive_network(*d.params.c_coupling(), d.params.c_main(), l_arr);
    const double f0 = resonant_frequency(d.params, d.bias) / kTwoPi;
    std::vector<double> omegas;
    if (cfg.task.frequency_grid_ghz.empty()) {
        for (int i = 0; i <= 350; ++i) omegas.push_back(kTwoPi * f0 * (50 + i) / 100.0);
    } else {
        for (double g : cfg.task.frequency_grid_ghz) omegas.push_back(kTwoPi * g * kGiga);
    }
    const auto spectrum = pce_spectrum(net, omegas, cfg.task.guard);
    out.csv("pce.csv", [&](std::ostream& os) { write_pce_csv(os, spectrum); });
    std::optional<double> at_2f0;
    try {
        at_2f0 = pce(net, 2.0 * kTwoPi * f0, cfg.task.guard);
    } catch (const NearPole&) {
    }
    int flagged = 0;
    for (const PceSample& p : spectrum) flagged += p.eta ? 0 : 1;
    json poles = json::array();
    for (double w : net.poles) poles.push_back(w / kTwoPi);
    res.summary = {{"device", device_json(d)},
                   {"c_coupling_pf", pf_from_farads(*d.params.c_coupling())},
                   {"pole_frequencies_hz", poles},
                   {"eta_pce_2f0", num(at_2f0)},
                   {"eta_pce_2f0_db", at_2f0 ? num(db_from_ratio(*at_2f0)) : json(nullptr)},
                   {"high_frequency_limit",
                    capacitive_pce_limit(*d.params.c_coupling(), d.params.c_main())},
                   {"points", spectrum.size()},
                   {"near_pole_points", flagged}};
}

void task_fluxfft(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const std::string& src = cfg.task.input;
    std::ifstream in(src);
    if (!in) throw IoError(src, "cannot open input");
    std::string first;
    while (std::getline(in, first)) {
        const auto b = first.find_first_not_of(" \t\r");
        if (b != std::string::npos && first[b] != '#') break;
    }
    in.clear();
    in.seekg(0);
    FluxSweepRecord record;
    std::vector<ReflectionFit> fits;
    std::vector<BiasTrace> traces;
    if (is_reflection_trace_header(first)) {
        traces = read_reflection_traces_csv(in, src);
        record = sweep_from_traces(traces, &fits);
    } else {
        record = read_flux_sweep_csv(in, src);
    }
    FluxSpectrumOptions opts;
    opts.truncation_db = cfg.task.truncation_db;
    opts.window_length = cfg.task.window_length;
    const FluxSpectrum s = flux_modulation_spectrum(record, opts);
    out.csv("spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, s); });
    if (!fits.empty()) {
        out.csv("fits.csv", [&](std::ostream& os) {
            os << "bias,f0_hz,kappa_hz,q_total,delay_s,rms_residual\n";
            for (std::size_t i = 0; i < fits.size(); ++i) {
                const ReflectionFit& f = fits[i];
                os << format_number(traces[i].bias) << ',' << format_number(f.f0_hz) << ','
                   << format_number(f.kappa_hz) << ',' << format_number(f.q_total) << ','
                   << format_number(f.delay_s) << ',' << format_number(f.rms_residual) << '\n';
            }
        });
    }
    json peaks = json::array();
    for (const SpectrumPeak& p : s.peaks) {
        peaks.push_back({{"bin", p.bin},
                         {"frequency", p.frequency},
                         {"period", p.period},
                         {"magnitude", p.magnitude},
                         {"band_magnitude", p.band_magnitude}});
    }
    res.summary = {{"samples", s.f0_values.size()},
                   {"bias_step", s.bias_step},
                   {"resampled", s.resampled},
                   {"reflection_fits", fits.size()},
                   {"peaks", peaks},
                   {"rms_error", s.rms_error},
                   {"relative_rms_error", num(s.relative_rms_error)}};
    out.json_file("fit_report.json", res.summary);
}

void task_calibrate(const RunConfig& cfg, OutputDir& out, RunOutcome& res) {
    const TaskConfig& t = cfg.task;
    const StarkCalibration cal{t.two_chi_mhz * kMega, t.kappa_mhz * kMega, t.readout_ghz * kGiga};
    std::vector<DrivePoint> points;
    for (const auto& [a, n] : t.points) points.push_back({a, n});
    const DriveCalibration fit = drive_power_calibration(points, cal);
    out.csv("calibration.csv", [&](std::ostream& os) {
        os << "amplitude,photons,fitted_photons,input_power_w,input_power_dbm\n";
        for (const DrivePoint& p : points) {
            os << format_number(p.amplitude) << ',' << format_number(p.photons) << ','
               << format_number(fit.photons_per_v2 * p.amplitude * p.amplitude) << ','
               << format_number(fit.input_power_w(p.amplitude)) << ','
               << format_number(fit.input_power_dbm(p.amplitude)) << '\n';
        }
    });
    json shifts = json::array();
    for (double mhz : t.qubit_shift_mhz) {
        const double n = photons_from_stark(cal, mhz * kMega);
        const double w = input_power_for_photons(cal, n);
        shifts.push_back({{"qubit_shift_mhz", mhz},
                          {"photons", n},
                          {"input_power_w", w},
                          {"input_power_dbm", num(dbm_from_watts(w))}});
    }
    res.summary = {{"chi_ratio", cal.chi_ratio()},
                   {"exponent", fit.exponent},
                   {"log_intercept", fit.log_intercept},
                   {"photons_per_v2", fit.photons_per_v2},
                   {"watts_per_v2", fit.watts_per_v2},
                   {"stark_points", shifts}};
    out.json_file("calibration.json", res.summary);
}

json error_json(const std::exception& e) {
    json j = {{"message", e.what()}};
    if (const auto* m = dynamic_cast<const MaxGainBelowTarget*>(&e)) {
        j["type"] = "MaxGainBelowTarget";
        j["max_gain_db"] = num(m->max_gain_db());
        j["at_pump_dbm"] = num(m->at_pump_dbm());
    } else if (const auto* n = dynamic_cast<const NoConvergence*>(&e)) {
        j["type"] = "NoConvergence";
        j["residual"] = num(n->residual());
        j["periods"] = n->periods();
    } else if (const auto* dv = dynamic_cast<const DivergedTrajectory*>(&e)) {
        j["type"] = "DivergedTrajectory";
        j["pump_power_dbm"] = num(dv->pump_power_dbm());
    } else if (const auto* c = dynamic_cast<const NoCompressionInRange*>(&e)) {
        j["type"] = "NoCompressionInRange";
        j["highest_power_dbm"] = num(c->highest_power_dbm());
    } else if (const auto* f = dynamic_cast<const FitDiverged*>(&e)) {
        j["type"] = "FitDiverged";
        j["residual"] = num(f->residual());
    } else if (const auto* b = dynamic_cast<const BadFit*>(&e)) {
        j["type"] = "BadFit";
        j["exponent"] = num(b->exponent());
    } else if (dynamic_cast<const IoError*>(&e)) {
        j["type"] = "IoError";
    } else if (dynamic_cast<const NonUniformGrid*>(&e)) {
        j["type"] = "NonUniformGrid";
    } else if (dynamic_cast<const InvalidParameter*>(&e)) {
        j["type"] = "InvalidParameter";
    } else {
        j["type"] = "Error";
    }
    return j;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const MaxGainBelowTarget*>(&e) || dynamic_cast<const NoConvergence*>(&e) ||
        dynamic_cast<const DivergedTrajectory*>(&e) ||
        dynamic_cast<const NoCompressionInRange*>(&e) || dynamic_cast<const FitDiverged*>(&e)) {
        return kExitNoConvergence;
    }
    return kExitFailure;
}

}  // namespace

RunOutcome run(const RunConfig& config, std::ostream& log) {
    RunOutcome res;
    const auto start = std::chrono::steady_clock::now();
    std::optional<OutputDir> out;
    json error;
    try {
        out.emplace(config.output, res);
        switch (config.task.kind) {
            case TaskKind::dc: task_dc(config, *out, res); break;
            case TaskKind::tune: task_tune(config, *out, res); break;
            case TaskKind::gain: task_gain(config, *out, res); break;
            case TaskKind::saturate: task_saturate(config, *out, res); break;
            case TaskKind::map: task_map(config, *out, res); break;
            case TaskKind::biasmap: task_biasmap(config, *out, res); break;
            case TaskKind::pce: task_pce(config, *out, res); break;
            case TaskKind::fluxfft: task_fluxfft(config, *out, res); break;
            case TaskKind::calibrate: task_calibrate(config, *out, res); break;
        }
        if (res.exit_code == kExitMapFailures) {
            log << "map finished with " << res.summary["diverged"].get<int>()
                << " cell(s) that could not be evaluated; see cells.csv\n";
        }
    } catch (const std::exception& e) {
        res.exit_code = exit_code_for(e);
        res.error = e.what();
        error = error_json(e);
        log << "error: " << to_string(config.task.kind) << ": " << e.what() << '\n';
    }
    if (!out) return res;

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json files = res.files;
    files.push_back("manifest.json");
    json manifest = {{"version", version_string()},
                     {"task", to_string(config.task.kind)},
                     {"config", to_json(config)},
                     {"threads", thread_count()},
                     {"wall_time_s", wall},
                     {"exit_code", res.exit_code},
                     {"summary", res.summary},
                     {"files", files}};
    if (!error.is_null()) manifest["error"] = error;
    try {
        out->write("manifest.json", [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
    } catch (const IoError& e) {
        log << "error: " << e.what() << '\n';
        res.error = e.what();
        res.exit_code = kExitFailure;
    }
    return res;
}

}  // namespace jpa
