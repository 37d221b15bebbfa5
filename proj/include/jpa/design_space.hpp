#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jpa/circuit.hpp"
#include "jpa/dynamics.hpp"
#include "jpa/metrics.hpp"

namespace jpa {

/// Parameters held fixed across a family of amplifiers.
struct FamilySpec {
    double l_junction = 60e-12;
    int n_squids = 25;
    double f0_target_hz = 6e9;

    friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

/// How the operating bias of a family member is chosen.
struct BiasStrategy {
    enum class Kind { max_c3, fixed };
    Kind kind = Kind::max_c3;
    double phi_e = 0.0;  ///< used when kind == fixed

    friend bool operator==(const BiasStrategy&, const BiasStrategy&) = default;
};

struct DesignFamily {
    CircuitParams params;
    FluxBias bias;
};

/// C and r_env chosen so that, at the operating bias, f0 = f0_target and Q = q_target.
[[nodiscard]] DesignFamily build_family(double l_shunt, double q_target, const FamilySpec& fixed,
                                        const BiasStrategy& strategy = {});

enum class CellStatus { ok, no_20db, diverged };

[[nodiscard]] const char* to_string(CellStatus s);

struct DesignMapCell {
    int n_squids = 0;
    double l_shunt = 0.0;
    double beta = 0.0;
    double q_target = 0.0;
    double inv_beta_q = 0.0;  ///< (beta Q)^-1
    double c_main = 0.0;
    double r_env = 0.0;
    FluxBias bias;
    double pump_frequency_hz = 0.0;
    std::optional<double> pump_power_20db_dbm;   ///< incident pump
    std::optional<double> core_pump_power_dbm;  ///< pump wave referenced to the array node
    std::optional<double> achieved_gain_db;
    double max_gain_db = 0.0;  ///< highest gain seen during the tune-up
    std::optional<double> input_p1db_dbm;
    std::optional<double> output_p1db_dbm;
    std::optional<double> eta_pae;  ///< referenced to the core pump power
    CellStatus status = CellStatus::diverged;
    std::string detail;  ///< failure reason, empty when ok
};

struct CellSpec {
    double l_shunt = 0.0;
    double q_target = 0.0;
};

struct DesignMapOptions {
    double target_gain_db = 20.0;
    BiasStrategy bias;
    ProbeSetup probe;
    TuneCaps caps;
    AdaptiveSaturationOptions saturation;
    SolverOptions solver;
    unsigned threads = 0;  ///< 0: thread_count()
};

/// build_family, tune_pump, find_p1db and the efficiency for a single cell. Never throws for
/// physics failures; they end up in status and detail.
[[nodiscard]] DesignMapCell evaluate_cell(const CellSpec& cell, const FamilySpec& fixed,
                                          const DesignMapOptions& opts = {});

/// Cells in row-major order over (q, l_shunt): q is the slow index.
[[nodiscard]] std::vector<CellSpec> grid_cells(std::span<const double> l_shunt_grid,
                                               std::span<const double> q_grid);

/// Cells on a ((beta Q)^-1, Q) grid: L_s = L_J / ((beta Q)^-1 Q). Q is the slow index.
[[nodiscard]] std::vector<CellSpec> inverse_beta_q_cells(std::span<const double> inv_beta_q_grid,
                                                         std::span<const double> q_grid,
                                                         const FamilySpec& fixed);

[[nodiscard]] std::vector<DesignMapCell> design_map(std::span<const CellSpec> cells,
                                                    const FamilySpec& fixed,
                                                    const DesignMapOptions& opts = {});

[[nodiscard]] std::vector<DesignMapCell> design_map(std::span<const double> l_shunt_grid,
                                                    std::span<const double> q_grid,
                                                    const FamilySpec& fixed,
                                                    const DesignMapOptions& opts = {});

/// Fixed column order; one row per cell, empty fields for absent values.
void write_cells_csv(std::ostream& os, std::span<const DesignMapCell> cells);

enum class ColumnAxis { l_shunt, inv_beta_q };

/// Pump power and efficiency tables over (Q rows) x (column axis). Missing cells are empty.
struct EfficiencyTables {
    ColumnAxis axis = ColumnAxis::l_shunt;
    std::vector<double> q_axis;
    std::vector<double> column_axis;
    std::vector<std::vector<std::optional<double>>> pump_power_dbm;  ///< [q][column]
    std::vector<std::vector<std::optional<double>>> eta_pae_db;      ///< [q][column]
};

[[nodiscard]] EfficiencyTables efficiency_maps(std::span<const DesignMapCell> cells,
                                               ColumnAxis axis = ColumnAxis::l_shunt);

// ---- flux bias x pump power ----

struct BiasGridPoint {
    double phi_e = 0.0;
    double pump_power_dbm = 0.0;
    double pump_frequency_hz = 0.0;
    double gain_db = 0.0;
    bool valid = false;  ///< false: diverged or no periodic state; excluded from contours
};

struct BranchPoint {
    double phi_e = 0.0;
    double pump_power_dbm = 0.0;
};

struct AlongBranchPoint {
    double phi_e = 0.0;
    double pump_power_dbm = 0.0;       ///< refined onto the target gain
    double core_pump_power_dbm = 0.0;
    double gain_db = 0.0;
    std::optional<double> input_p1db_dbm;
    std::optional<double> output_p1db_dbm;
    std::optional<double> eta_pae;
};

struct BiasContour {
    std::vector<double> phi_e_grid;
    std::vector<double> pump_power_grid_dbm;
    std::vector<BiasGridPoint> grid;  ///< row-major, phi_e slow
    std::vector<BranchPoint> low_branch;
    std::vector<BranchPoint> high_branch;
    std::vector<AlongBranchPoint> along_branch;
};

struct BiasMapOptions {
    ProbeSetup probe;  ///< pump frequency left unset: 2 f0 at each bias
    SolverOptions solver;
    AdaptiveSaturationOptions saturation;
    double refine_tolerance_db = 0.05;
    bool along_branch = true;  ///< compute P1dB and efficiency on the low branch
    unsigned threads = 0;
};

[[nodiscard]] BiasContour bias_pump_map(const CircuitParams& params,
                                        std::span<const double> phi_e_grid,
                                        std::span<const double> pump_power_grid_dbm,
                                        double target_gain_db, const BiasMapOptions& opts = {});

void write_bias_grid_csv(std::ostream& os, const BiasContour& contour);
void write_branch_csv(std::ostream& os, const BiasContour& contour);

}  // namespace jpa
