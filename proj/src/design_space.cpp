#include "jpa/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "jpa/errors.hpp"
#include "jpa/format.hpp"
#include "jpa/parallel.hpp"
#include "jpa/units.hpp"

namespace jpa {

namespace {

unsigned workers(unsigned requested) { return requested > 0 ? requested : thread_count(); }

std::optional<double> db_or_empty(const std::optional<double>& ratio) {
    if (!ratio || !(*ratio > 0.0)) return std::nullopt;
    return db_from_ratio(*ratio);
}

// Linear interpolation of the pump power where the gain crosses `level` between a and b.
double crossing(const BiasGridPoint& a, const BiasGridPoint& b, double level) {
    const double t = (level - a.gain_db) / (b.gain_db - a.gain_db);
    return a.pump_power_dbm + t * (b.pump_power_dbm - a.pump_power_dbm);
}

}  // namespace

DesignFamily build_family(double l_shunt, double q_target, const FamilySpec& fixed,
                          const BiasStrategy& strategy) {
    if (!(q_target > 0.0)) throw InvalidParameter("q_target must be > 0");
    if (!(fixed.f0_target_hz > 0.0)) throw InvalidParameter("f0_target must be > 0");
    // The DC solution depends on beta only, so L_arr at the bias is known before C is chosen.
    const CircuitParams probe(fixed.n_squids, l_shunt, fixed.l_junction, 1e-12, 50.0);
    const FluxBias probe_bias = strategy.kind == BiasStrategy::Kind::max_c3
                                    ? max_c3_bias(probe)
                                    : solve_dc_phase(probe, strategy.phi_e);
    const double l_arr = array_inductance(probe, probe_bias);
    const double w0 = kTwoPi * fixed.f0_target_hz;
    const double c = 1.0 / (w0 * w0 * l_arr);
    const double r = q_target * std::sqrt(l_arr / c);
    CircuitParams params(fixed.n_squids, l_shunt, fixed.l_junction, c, r);
    FluxBias bias = solve_dc_phase(params, probe_bias.phi_e);
    return {params, bias};
}

const char* to_string(CellStatus s) {
    switch (s) {
        case CellStatus::ok: return "ok";
        case CellStatus::no_20db: return "no_20db";
        case CellStatus::diverged: return "diverged";
    }
    return "unknown";
}

DesignMapCell evaluate_cell(const CellSpec& spec, const FamilySpec& fixed,
                            const DesignMapOptions& opts) {
    DesignMapCell cell;
    cell.n_squids = fixed.n_squids;
    cell.l_shunt = spec.l_shunt;
    cell.q_target = spec.q_target;
    cell.beta = spec.l_shunt / fixed.l_junction;
    cell.inv_beta_q = 1.0 / (cell.beta * spec.q_target);
    try {
        const DesignFamily fam = build_family(spec.l_shunt, spec.q_target, fixed, opts.bias);
        cell.c_main = fam.params.c_main();
        cell.r_env = fam.params.r_env();
        cell.bias = fam.bias;
        cell.pump_frequency_hz = pump_frequency_for(fam.bias, opts.probe);

        const PumpOperatingPoint op =
            tune_pump(fam.params, fam.bias, opts.target_gain_db, opts.probe, opts.caps, opts.solver);
        for (const GainSample& s : op.samples) cell.max_gain_db = std::max(cell.max_gain_db, s.gain_db);

        const SaturationResult sat =
            find_p1db(fam.params, fam.bias, op.pump_power_dbm, op.measurement.probe_frequency_hz,
                      op.achieved_gain_db, opts.saturation, opts.probe, opts.solver);
        cell.pump_power_20db_dbm = op.pump_power_dbm;
        cell.core_pump_power_dbm = op.core_pump_power_dbm;
        cell.achieved_gain_db = op.achieved_gain_db;
        cell.input_p1db_dbm = sat.input_p1db_dbm;
        cell.output_p1db_dbm = sat.output_p1db_dbm;
        cell.eta_pae = pump_added_efficiency(sat, op.core_pump_power_dbm);
        cell.status = CellStatus::ok;
    } catch (const MaxGainBelowTarget& e) {
        cell.status = CellStatus::no_20db;
        cell.max_gain_db = e.max_gain_db();
        cell.detail = e.what();
    } catch (const Error& e) {
        cell.status = CellStatus::diverged;
        cell.detail = e.what();
    }
    return cell;
}

std::vector<CellSpec> grid_cells(std::span<const double> l_shunt_grid,
                                 std::span<const double> q_grid) {
    std::vector<CellSpec> cells;
    cells.reserve(l_shunt_grid.size() * q_grid.size());
    for (double q : q_grid) {
        for (double ls : l_shunt_grid) cells.push_back({ls, q});
    }
    return cells;
}

std::vector<CellSpec> inverse_beta_q_cells(std::span<const double> inv_beta_q_grid,
                                           std::span<const double> q_grid,
                                           const FamilySpec& fixed) {
    std::vector<CellSpec> cells;
    cells.reserve(inv_beta_q_grid.size() * q_grid.size());
    for (double q : q_grid) {
        for (double inv : inv_beta_q_grid) cells.push_back({fixed.l_junction / (inv * q), q});
    }
    return cells;
}

std::vector<DesignMapCell> design_map(std::span<const CellSpec> cells, const FamilySpec& fixed,
                                      const DesignMapOptions& opts) {
    std::vector<DesignMapCell> out(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) { out[i] = evaluate_cell(cells[i], fixed, opts); },
                 workers(opts.threads));
    return out;
}

std::vector<DesignMapCell> design_map(std::span<const double> l_shunt_grid,
                                      std::span<const double> q_grid, const FamilySpec& fixed,
                                      const DesignMapOptions& opts) {
    const std::vector<CellSpec> cells = grid_cells(l_shunt_grid, q_grid);
    return design_map(std::span<const CellSpec>(cells), fixed, opts);
}

void write_cells_csv(std::ostream& os, std::span<const DesignMapCell> cells) {
    os << "n_squids,l_shunt_ph,beta,q_target,inv_beta_q,c_main_pf,r_env_ohm,phi_e,delta_phi_per_squid,"
          "f0_hz,pump_frequency_hz,pump_power_20db_dbm,core_pump_power_dbm,achieved_gain_db,"
          "max_gain_db,input_p1db_dbm,output_p1db_dbm,eta_pae,eta_pae_db,status\n";
    for (const DesignMapCell& c : cells) {
        os << c.n_squids << ',' << format_number(ph_from_henries(c.l_shunt)) << ',' << format_number(c.beta) << ','
           << format_number(c.q_target) << ',' << format_number(c.inv_beta_q) << ','
           << format_number(pf_from_farads(c.c_main)) << ',' << format_number(c.r_env) << ','
           << format_number(c.bias.phi_e) << ','
           << format_number(c.bias.junction_phase(c.n_squids))
           << ',' << format_number(c.bias.omega0 / kTwoPi) << ','
           << format_number(c.pump_frequency_hz) << ',' << format_number(c.pump_power_20db_dbm)
           << ',' << format_number(c.core_pump_power_dbm) << ','
           << format_number(c.achieved_gain_db) << ',' << format_number(c.max_gain_db) << ','
           << format_number(c.input_p1db_dbm) << ',' << format_number(c.output_p1db_dbm) << ','
           << format_number(c.eta_pae) << ',' << format_number(db_or_empty(c.eta_pae)) << ','
           << to_string(c.status) << '\n';
    }
}

EfficiencyTables efficiency_maps(std::span<const DesignMapCell> cells, ColumnAxis axis) {
    EfficiencyTables t;
    t.axis = axis;
    if (cells.empty()) return t;
    auto column_of = [&](const DesignMapCell& c) {
        return axis == ColumnAxis::l_shunt ? c.l_shunt : c.inv_beta_q;
    };
    // Keys equal to 1e-9 relative are the same grid line.
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); };
    auto insert_key = [&](std::vector<double>& keys, double v) {
        for (double k : keys) {
            if (close(k, v)) return;
        }
        keys.push_back(v);
    };
    for (const DesignMapCell& c : cells) {
        insert_key(t.q_axis, c.q_target);
        insert_key(t.column_axis, column_of(c));
    }
    std::sort(t.q_axis.begin(), t.q_axis.end());
    std::sort(t.column_axis.begin(), t.column_axis.end());
    auto index_of = [&](const std::vector<double>& keys, double v) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (close(keys[i], v)) return i;
        }
        return keys.size();
    };
    t.pump_power_dbm.assign(t.q_axis.size(), std::vector<std::optional<double>>(t.column_axis.size()));
    t.eta_pae_db = t.pump_power_dbm;
    for (const DesignMapCell& c : cells) {
        if (c.status != CellStatus::ok) continue;
        const std::size_t r = index_of(t.q_axis, c.q_target);
        const std::size_t k = index_of(t.column_axis, column_of(c));
        t.pump_power_dbm[r][k] = c.pump_power_20db_dbm;
        t.eta_pae_db[r][k] = db_or_empty(c.eta_pae);
    }
    return t;
}

BiasContour bias_pump_map(const CircuitParams& params, std::span<const double> phi_e_grid,
                          std::span<const double> pump_power_grid_dbm, double target_gain_db,
                          const BiasMapOptions& opts) {
    for (double phi : phi_e_grid) {
        if (!(phi > 0.0 && phi < std::numbers::pi)) {
            throw InvalidParameter("bias map phi_e values must lie in (0, pi)");
        }
    }
    if (!std::is_sorted(pump_power_grid_dbm.begin(), pump_power_grid_dbm.end())) {
        throw InvalidParameter("pump power grid must be ascending");
    }

    BiasContour out;
    out.phi_e_grid.assign(phi_e_grid.begin(), phi_e_grid.end());
    out.pump_power_grid_dbm.assign(pump_power_grid_dbm.begin(), pump_power_grid_dbm.end());
    const std::size_t rows = phi_e_grid.size();
    const std::size_t cols = pump_power_grid_dbm.size();

    std::vector<FluxBias> biases;
    biases.reserve(rows);
    for (double phi : phi_e_grid) biases.push_back(solve_dc_phase(params, phi));

    out.grid.resize(rows * cols);
    parallel_for(
        rows * cols,
        [&](std::size_t i) {
            const std::size_t r = i / cols;
            const std::size_t k = i % cols;
            BiasGridPoint& g = out.grid[i];
            g.phi_e = phi_e_grid[r];
            g.pump_power_dbm = pump_power_grid_dbm[k];
            g.pump_frequency_hz = pump_frequency_for(biases[r], opts.probe);
            try {
                const GainMeasurement m = measure_gain(
                    params, biases[r], g.pump_frequency_hz, g.pump_power_dbm,
                    0.5 * g.pump_frequency_hz + opts.probe.detuning_hz,
                    opts.probe.probe_power_dbm, opts.probe.base_frequency_hz, opts.solver);
                g.gain_db = m.gain_db;
                g.valid = std::isfinite(m.gain_db);
            } catch (const NoConvergence&) {
                g.valid = false;
            } catch (const DivergedTrajectory&) {
                g.valid = false;
            }
        },
        workers(opts.threads));

    // Branch classification per bias row.
    std::vector<std::optional<std::pair<std::size_t, std::size_t>>> low_bracket(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<const BiasGridPoint*> row;
        for (std::size_t k = 0; k < cols; ++k) {
            if (out.grid[r * cols + k].valid) row.push_back(&out.grid[r * cols + k]);
        }
        if (row.empty()) continue;
        std::size_t peak = 0;
        for (std::size_t k = 1; k < row.size(); ++k) {
            if (row[k]->gain_db > row[peak]->gain_db) peak = k;
        }
        for (std::size_t k = 1; k < row.size(); ++k) {
            const BiasGridPoint& a = *row[k - 1];
            const BiasGridPoint& b = *row[k];
            if (a.gain_db < target_gain_db && b.gain_db >= target_gain_db) {
                out.low_branch.push_back({phi_e_grid[r], crossing(a, b, target_gain_db)});
                low_bracket[r] = std::pair{static_cast<std::size_t>(&a - out.grid.data()),
                                           static_cast<std::size_t>(&b - out.grid.data())};
                break;
            }
        }
        for (std::size_t k = peak + 1; k < row.size(); ++k) {
            const BiasGridPoint& a = *row[k - 1];
            const BiasGridPoint& b = *row[k];
            if ((a.gain_db - target_gain_db) * (b.gain_db - target_gain_db) < 0.0 ||
                (b.gain_db == target_gain_db && a.gain_db != target_gain_db)) {
                out.high_branch.push_back({phi_e_grid[r], crossing(a, b, target_gain_db)});
            }
        }
    }
    if (!opts.along_branch) return out;

    // Refine each low-branch point onto the target, then compress it.
    std::vector<std::size_t> branch_rows;
    for (std::size_t r = 0; r < rows; ++r) {
        if (low_bracket[r]) branch_rows.push_back(r);
    }
    out.along_branch.resize(branch_rows.size());
    parallel_for(
        branch_rows.size(),
        [&](std::size_t j) {
            const std::size_t r = branch_rows[j];
            const BiasGridPoint& a = out.grid[low_bracket[r]->first];
            const BiasGridPoint& b = out.grid[low_bracket[r]->second];
            AlongBranchPoint& pt = out.along_branch[j];
            pt.phi_e = phi_e_grid[r];
            pt.pump_power_dbm = crossing(a, b, target_gain_db);
            pt.gain_db = target_gain_db;
            try {
                const GainMeasurement m = refine_pump_power(
                    params, biases[r], target_gain_db, {a.pump_power_dbm, a.gain_db},
                    {b.pump_power_dbm, b.gain_db}, opts.refine_tolerance_db, opts.probe,
                    opts.solver);
                pt.pump_power_dbm = m.pump_power_dbm;
                pt.core_pump_power_dbm = m.core_pump_power_dbm;
                pt.gain_db = m.gain_db;
                const SaturationResult sat =
                    find_p1db(params, biases[r], m.pump_power_dbm, m.probe_frequency_hz, m.gain_db,
                              opts.saturation, opts.probe, opts.solver);
                pt.input_p1db_dbm = sat.input_p1db_dbm;
                pt.output_p1db_dbm = sat.output_p1db_dbm;
                pt.eta_pae = pump_added_efficiency(sat, m.core_pump_power_dbm);
            } catch (const Error&) {
                // left without saturation data
            }
        },
        workers(opts.threads));
    return out;
}

void write_bias_grid_csv(std::ostream& os, const BiasContour& contour) {
    os << "phi_e,pump_power_dbm,pump_frequency_hz,gain_db,valid\n";
    for (const BiasGridPoint& g : contour.grid) {
        os << format_number(g.phi_e) << ',' << format_number(g.pump_power_dbm) << ','
           << format_number(g.pump_frequency_hz) << ','
           << (g.valid ? format_number(g.gain_db) : std::string()) << ',' << (g.valid ? 1 : 0)
           << '\n';
    }
}

void write_branch_csv(std::ostream& os, const BiasContour& contour) {
    os << "branch,phi_e,pump_power_dbm,core_pump_power_dbm,gain_db,input_p1db_dbm,"
          "output_p1db_dbm,eta_pae,eta_pae_db\n";
    for (const AlongBranchPoint& p : contour.along_branch) {
        os << "low," << format_number(p.phi_e) << ',' << format_number(p.pump_power_dbm) << ','
           << format_number(p.core_pump_power_dbm) << ',' << format_number(p.gain_db) << ','
           << format_number(p.input_p1db_dbm) << ',' << format_number(p.output_p1db_dbm) << ','
           << format_number(p.eta_pae) << ',' << format_number(db_or_empty(p.eta_pae)) << '\n';
    }
    for (const BranchPoint& p : contour.high_branch) {
        os << "high," << format_number(p.phi_e) << ',' << format_number(p.pump_power_dbm)
           << ",,,,,,\n";
    }
}

}  // namespace jpa
