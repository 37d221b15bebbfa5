// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jpa/analysis.hpp"
#include "jpa/circuit.hpp"
#include "jpa/config.hpp"
#include "jpa/coupling.hpp"
#include "jpa/design_space.hpp"
#include "jpa/dynamics.hpp"
#include "jpa/metrics.hpp"
#include "jpa/parallel.hpp"
#include "jpa/run.hpp"
#include "jpa/units.hpp"

using namespace jpa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = std::numbers::pi;

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds) {
    if (!pass) ++failures;
    std::printf("%s  [%2d] %s (%.1f s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), seconds);
    std::fflush(stdout);
}

double since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Power balance over every converged steady state while enabled.
struct BalanceLog {
    std::mutex m;
    bool enabled = false;
    long runs = 0;
    long unconverged = 0;
    double worst = 0.0;
} balance;

void install_balance_observer() {
    set_solution_observer([](const SteadyStateSolution& s) {
        std::lock_guard lock(balance.m);
        if (!balance.enabled) return;
        if (!s.converged) {
            ++balance.unconverged;
            return;
        }
        ++balance.runs;
        balance.worst = std::max(balance.worst, s.power_imbalance());
    });
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string cells_csv(std::span<const DesignMapCell> cells) {
    std::ostringstream os;
    write_cells_csv(os, cells);
    return os.str();
}

RunOutcome run_config(const fs::path& file, const fs::path& out) {
    RunConfig c = load_config(file);
    c.output.directory = out.string();
    if (!c.task.input.empty() && fs::path(c.task.input).is_relative()) {
        c.task.input = (fs::path(JPA_SOURCE_DIR) / c.task.input).string();
    }
    std::ostringstream log;
    return run(c, log);
}

// Every CSV the two runs wrote, compared byte for byte.
bool same_csv_outputs(const RunOutcome& a, const fs::path& da, const RunOutcome& b,
                      const fs::path& db, int& compared) {
    if (a.files != b.files || a.exit_code != b.exit_code) return false;
    for (const std::string& f : a.files) {
        if (fs::path(f).extension() != ".csv") continue;
        ++compared;
        if (slurp(da / f) != slurp(db / f)) return false;
    }
    return true;
}

}  // namespace

int main() {
    const auto t_all = Clock::now();
    install_balance_observer();
    const FamilySpec family{};
    const double beta_a = 15.0 / 60.0;
    std::printf("threads: %u (hardware %u)\n", thread_count(), std::thread::hardware_concurrency());

    // ---- 2: DC closed forms
    {
        const auto t0 = Clock::now();
        double worst_bias = 0.0;
        for (double ls : {5.0, 15.0, 30.0, 45.0}) {
            const CircuitParams p(25, henries_from_ph(ls), henries_from_ph(60.0), 2e-12, 50.0);
            worst_bias = std::max(worst_bias, std::abs(max_c3_bias(p).phi_e - (kPi / 2 + ls / 60.0)));
        }
        const CircuitParams pa(25, henries_from_ph(15.0), henries_from_ph(60.0), 2e-12, 50.0);
        const FluxBias star = max_c3_bias(pa);
        const double l_arr = array_inductance(pa, star);
        const double rel_l = std::abs(l_arr / (25 * henries_from_ph(15.0)) - 1.0);
        const double f0 = resonant_frequency(pa, star) / kTwoPi;
        const bool ok = worst_bias <= 1e-9 && rel_l <= 1e-12 && f0 >= 5.70e9 && f0 <= 6.10e9;
        const double t = since(t0);
        report(2, ok && t < 1.0,
               fmt("DC closed forms: |phi_e* - (pi/2+beta)| = %.2e rad (<= 1e-9), L_arr/(N L_s) - 1 = %.1e, "
                   "f0 = %.4f GHz in [5.70, 6.10], runtime < 1 s",
                   worst_bias, rel_l, f0 / 1e9),
               t);
    }

    const DesignFamily dev = build_family(henries_from_ph(15.0), 8.1, family);
    balance.enabled = true;

    // ---- 1: lossless reflection with the pump off
    {
        const auto t0 = Clock::now();
        const double f0 = dev.bias.omega0 / kTwoPi;
        const double kappa = dev.params.gamma() / kTwoPi;
        SolverOptions s;
        s.target_gain_db = 0.0;
        double worst = 0.0;
        bool all_converged = true;
        for (int i = -10; i <= 10; ++i) {
            const double f = std::round((f0 + i * 0.3 * kappa) / 1e6) * 1e6;
            const double a = amplitude_for_power_dbm(-140.0, kTwoPi * f, dev.params.r_env());
            const DriveSpec drive(1e6, {Tone{f, a, 0.0, ToneRole::probe}});
            const SteadyStateSolution sol = integrate_to_steady_state(dev.params, dev.bias, drive, s);
            all_converged = all_converged && sol.converged;
            const HarmonicEntry& h = sol.at(f);
            worst = std::max(worst, std::abs(std::abs(h.outgoing) / std::abs(h.incoming) - 1.0));
        }
        const double t = since(t0);
        report(1, all_converged && worst <= 1e-6 && t < 10.0,
               fmt("lossless reflection: max ||out/in| - 1| = %.2e over 21 points in +-3 linewidths "
                   "(<= 1e-6), runtime < 10 s",
                   worst),
               t);
    }

    // ---- 10: analysis pipeline
    {
        const auto t0 = Clock::now();
        const int m = 256;
        const double span = 40e-3;
        auto record = [&](auto f) {
            FluxSweepRecord r;
            for (int n = 0; n < m; ++n) {
                const double i = (n + 0.5) * span / m;
                r.bias_values.push_back(i);
                r.f0_values.push_back(f(i));
            }
            return r;
        };
        const double bin = 1.0 / (2 * m * (span / m));
        const double a1 = 0.2e9;
        const FluxSpectrum one =
            flux_modulation_spectrum(record([&](double i) { return 6e9 - a1 * std::cos(kTwoPi * i / 10e-3); }));
        const bool one_pos = !one.peaks.empty() && std::abs(one.peaks[0].frequency - 100.0) <= bin;
        // an amplitude-A cosine carries A sqrt(M/2) in the orthonormal transform
        const double one_ratio = one.peaks.empty() ? 0.0 : one.peaks[0].band_magnitude / (a1 * std::sqrt(m / 2.0));
        const FluxSpectrum two = flux_modulation_spectrum(record([&](double i) {
            return 6e9 - 0.2e9 * std::cos(kTwoPi * i / 10e-3) - 0.05e9 * std::cos(kTwoPi * i / 3.3e-3);
        }));
        const bool two_pos = two.peaks.size() >= 2 && std::abs(two.peaks[0].frequency - 100.0) <= bin &&
                             std::abs(two.peaks[1].frequency - 1.0 / 3.3e-3) <= bin;
        const double two_ratio =
            two.peaks.size() >= 2 ? two.peaks[0].band_magnitude / two.peaks[1].band_magnitude / 4.0 : 0.0;

        const StarkCalibration cal{0.348e6, 1e6, 5.7e9};
        const double n_bar = photons_from_stark(cal, 10 * cal.two_chi_hz);

        std::mt19937_64 rng(7);
        std::normal_distribution<double> noise(0.0, 0.03);
        std::vector<DrivePoint> pts;
        for (int k = 1; k <= 12; ++k) {
            const double a = 0.01 * k;
            pts.push_back({a, 5000.0 * a * a * std::exp(noise(rng))});
        }
        const DriveCalibration fit = drive_power_calibration(pts, cal);

        const bool ok = one_pos && two_pos && std::abs(one_ratio - 1.0) <= 0.1 &&
                        std::abs(two_ratio - 1.0) <= 0.1 && n_bar == 10.0 &&
                        std::abs(fit.exponent - 2.0) <= 0.05;
        const double t = since(t0);
        report(10, ok && t < 10.0,
               fmt("analysis: peaks within one bin (%s/%s), magnitude ratios %.3f and %.3f of truth (within 10%%), "
                   "n = %.15g for shift/2chi = 10, drive exponent %.4f (2.00 +- 0.05), runtime < 10 s",
                   one_pos ? "yes" : "no", two_pos ? "yes" : "no", one_ratio, two_ratio, n_bar, fit.exponent),
               t);
    }

    // ---- 3: 20 dB tune-up of device A at max c3
    const ProbeSetup probe{};
    PumpOperatingPoint op;
    bool tuned = false;
    {
        const auto t0 = Clock::now();
        std::string what;
        try {
            op = tune_pump(dev.params, dev.bias, 20.0, probe);
            tuned = true;
            what = fmt("pump %.3f dBm incident (%.3f dBm core), gain %.4f dB", op.pump_power_dbm,
                       op.core_pump_power_dbm, op.achieved_gain_db);
        } catch (const std::exception& e) {
            what = e.what();
        }
        const double t = since(t0);
        const bool bias_ok = std::abs(dev.bias.phi_e - (kPi / 2 + beta_a)) <= 1e-9;
        report(3, tuned && bias_ok && std::abs(op.achieved_gain_db - 20.0) <= 0.05 && t < 300.0,
               "20 dB tune-up (beta 0.25, Q 8.1): " + what + " (20.0 +- 0.05), runtime < 5 min", t);
    }

    // ---- 4: input P1dB of device A
    SaturationResult sat;
    bool saturated = false;
    {
        const auto t0 = Clock::now();
        std::string what = "no tuned operating point";
        if (tuned) {
            try {
                sat = find_p1db(dev.params, dev.bias, op.pump_power_dbm,
                                op.pump_frequency_hz / 2 + probe.detuning_hz, op.achieved_gain_db, {}, probe);
                saturated = true;
                what = fmt("input P1dB %.2f dBm, output %.2f dBm", sat.input_p1db_dbm, sat.output_p1db_dbm);
            } catch (const std::exception& e) {
                what = e.what();
            }
        }
        const double t = since(t0);
        report(4, saturated && std::abs(sat.input_p1db_dbm + 94.2) <= 4.0 && t < 1200.0,
               "saturation: " + what + " (-94.2 +- 4 dBm), runtime < 20 min", t);
    }

    // ---- 7: efficiency budget
    {
        const auto t0 = Clock::now();
        const fs::path dir = fs::temp_directory_path() / "jpa_acceptance" / "pce";
        fs::remove_all(dir);
        const RunOutcome pce = run_config(fs::path(JPA_SOURCE_DIR) / "configs" / "pce.json", dir);
        const bool have_pce = pce.exit_code == kExitOk && pce.summary["eta_pce_2f0"].is_number();
        const double eta_pce = have_pce ? pce.summary["eta_pce_2f0"].get<double>() : 0.0;
        bool ok = false;
        std::string what = "no saturation result";
        if (saturated && have_pce) {
            const double pae_db = 10 * std::log10(pump_added_efficiency(sat, op.core_pump_power_dbm));
            const double total_db = 10 * std::log10(eta_pce) + pae_db;
            ok = std::abs(pae_db + 20.0) <= 3.0 && std::abs(total_db + 37.0) <= 5.0;
            what = fmt("eta_PAE %.2f dB (-20 +- 3), eta_PCE(2 f0) %.2f dB, eta_total %.2f dB (-37 +- 5)", pae_db,
                       10 * std::log10(eta_pce), total_db);
        }
        const double t = since(t0);
        report(7, ok && t < 300.0, "efficiency budget: " + what + ", runtime < 5 min beyond #4", t);
    }

    // ---- 8, part: signal-minus-idler and symmetry at 20 dB
    double smi = 0.0;
    double asym = std::numeric_limits<double>::infinity();
    double t_sym = 0.0;
    if (tuned) {
        const auto t0 = Clock::now();
        smi = op.measurement.signal_minus_idler;
        asym = 0.0;
        for (double d : {1e6, 5e6, 20e6}) {
            auto g = [&](double det) {
                return measure_gain(dev.params, dev.bias, op.pump_frequency_hz, op.pump_power_dbm,
                                    op.pump_frequency_hz / 2 + det, probe.probe_power_dbm, probe.base_frequency_hz)
                    .gain_db;
            };
            asym = std::max(asym, std::abs(g(d) - g(-d)));
        }
        t_sym = since(t0);
    }

    // ---- 5 and 6: desk design map
    std::vector<double> l_grid;
    for (double l : {8.0, 12.4, 16.8, 21.2, 25.6, 30.0}) l_grid.push_back(henries_from_ph(l));
    const std::vector<double> q_grid{4, 6, 8, 10, 12, 14};
    std::vector<DesignMapCell> map;
    double t_map = 0.0;
    {
        const auto t0 = Clock::now();
        map = design_map(l_grid, q_grid, family);
        t_map = since(t0);
        // 2 h on 8 cores, scaled to the cores actually used
        const unsigned used = std::min(thread_count(), std::max(1u, std::thread::hardware_concurrency()));
        const double budget = 2 * 3600.0 * 8.0 / used;
        double max_ok = 0.0, min_fail = std::numeric_limits<double>::infinity();
        int bad_low = 0, bad_high = 0, ok_cells = 0, diverged = 0;
        for (const DesignMapCell& c : map) {
            const bool ok = c.status == CellStatus::ok;
            ok_cells += ok;
            diverged += c.status == CellStatus::diverged;
            if (c.inv_beta_q <= 0.5 && !ok) ++bad_low;
            if (c.inv_beta_q >= 0.8 && ok) ++bad_high;
            if (ok) max_ok = std::max(max_ok, c.inv_beta_q);
            else min_fail = std::min(min_fail, c.inv_beta_q);
        }
        const bool brackets = max_ok <= 0.65 && 0.65 <= min_fail;
        report(5, bad_low == 0 && bad_high == 0 && brackets && t_map < budget,
               fmt("design-map boundary: %d/36 cells reach 20 dB (%d diverged); failures at (bQ)^-1 <= 0.5: %d, "
                   "successes at >= 0.8: %d; largest ok %.3f, smallest failing %.3f (must bracket 0.65); "
                   "runtime %.0f s < %.0f s (2 h x 8 cores / %u)",
                   ok_cells, diverged, bad_low, bad_high, max_ok, min_fail, t_map, budget, used),
               t_map);

        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const DesignMapCell& c : map) {
            if (c.status != CellStatus::ok || !c.input_p1db_dbm) continue;
            lo = std::min(lo, *c.input_p1db_dbm);
            hi = std::max(hi, *c.input_p1db_dbm);
        }
        report(6, hi - lo >= 10.0,
               fmt("saturation spread over ok cells: %.2f dB (%.2f to %.2f dBm), >= 10 dB", hi - lo, lo, hi), 0.0);
    }

    // ---- 8: scattering and energy properties
    {
        std::lock_guard lock(balance.m);
        balance.enabled = false;
        report(8, balance.runs > 0 && balance.worst <= 0.01 && std::abs(smi - 1.0) <= 0.02 && asym <= 0.1,
               fmt("energy: worst power imbalance %.2e over %ld converged runs of #1-#7 (<= 1%%), "
                   "signal-minus-idler %.4f at 20 dB (1 +- 2%%), gain asymmetry about pump/2 %.4f dB (<= 0.1)",
                   balance.worst, balance.runs, smi, asym),
               t_sym);
    }

    // ---- 9: bias contour of device A
    {
        const auto t0 = Clock::now();
        const std::vector<double> phis{1.2, 1.4, 1.6, 1.82, 2.0, 2.2, 2.4};
        std::vector<double> pumps;
        for (double p = -48; p <= -34; p += 1) pumps.push_back(p);
        const BiasContour c = bias_pump_map(dev.params, phis, pumps, 20.0);
        double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin, smin = pmin, smax = -pmin;
        int with_p1db = 0;
        for (const AlongBranchPoint& p : c.along_branch) {
            pmin = std::min(pmin, p.pump_power_dbm);
            pmax = std::max(pmax, p.pump_power_dbm);
            if (p.input_p1db_dbm) {
                ++with_p1db;
                smin = std::min(smin, *p.input_p1db_dbm);
                smax = std::max(smax, *p.input_p1db_dbm);
            }
        }
        const double t = since(t0);
        const bool ok = with_p1db >= 2 && smax - smin <= 6.0 && pmax - pmin >= 3.0 && t < 3600.0;
        report(9, ok,
               fmt("bias contour: %zu low-branch points, input P1dB range %.2f dB (<= 6), pump range %.2f dB (>= 3), "
                   "runtime < 1 h",
                   c.along_branch.size(), smax - smin, pmax - pmin),
               t);
    }

    // ---- 11: determinism
    {
        const auto t0 = Clock::now();
        const fs::path root = fs::temp_directory_path() / "jpa_acceptance" / "rerun";
        fs::remove_all(root);
        bool same = true;
        int compared = 0;
        for (const char* name : {"device_a_dc.json", "device_a_tune.json", "pce.json", "fluxfft.json",
                                 "calibrate.json"}) {
            const fs::path cfg = fs::path(JPA_SOURCE_DIR) / "configs" / name;
            const RunOutcome a = run_config(cfg, root / "a" / name);
            const RunOutcome b = run_config(cfg, root / "b" / name);
            same = same && same_csv_outputs(a, root / "a" / name, b, root / "b" / name, compared);
        }
        // map rows recomputed on one and three threads against the full map above
        const std::vector<std::size_t> pick{0, 14, 35};
        std::vector<CellSpec> specs;
        std::vector<DesignMapCell> expected;
        const auto all = grid_cells(l_grid, q_grid);
        for (std::size_t i : pick) {
            specs.push_back(all[i]);
            expected.push_back(map[i]);
        }
        DesignMapOptions one, three;
        one.threads = 1;
        three.threads = 3;
        const std::string want = cells_csv(expected);
        const bool map_same = cells_csv(design_map(specs, family, one)) == want &&
                              cells_csv(design_map(specs, family, three)) == want;
        const double t = since(t0);
        report(11, same && map_same && compared > 0,
               fmt("determinism: %d CSV files identical across reruns of five configs (%s); %zu map rows identical "
                   "on 1 and 3 threads (%s)",
                   compared, same ? "yes" : "no", pick.size(), map_same ? "yes" : "no"),
               t);
        fs::remove_all(fs::temp_directory_path() / "jpa_acceptance");
    }

    set_solution_observer({});
    std::printf("%d failure(s), total %.0f s\n", failures, since(t_all));
    return failures == 0 ? 0 : 1;
}
