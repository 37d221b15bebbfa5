#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "jpa/errors.hpp"

namespace jpa {

/// Invalid run configuration; path() is a JSON pointer to the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

enum class TaskKind { dc, tune, gain, saturate, map, biasmap, pce, fluxfft, calibrate };

[[nodiscard]] const char* to_string(TaskKind k);
[[nodiscard]] std::optional<TaskKind> task_from_string(const std::string& s);

/// Circuit block, in pH / pF / ohm / GHz. Either (c_main, r_env) or (q_target, f0_target)
/// must be given; the latter builds the family member at the operating bias.
struct CircuitConfig {
    int n_squids = 25;
    double l_shunt = 0.0;
    double l_junction = 60.0;
    std::optional<double> c_main;
    std::optional<double> r_env;
    std::optional<double> c_coupling;
    std::optional<double> q_target;
    std::optional<double> f0_target;

    friend bool operator==(const CircuitConfig&, const CircuitConfig&) = default;
};

struct SolverConfig {
    int steps_per_pump_period = 512;
    double tolerance = 1e-5;
    std::optional<std::int64_t> warmup_periods;
    int min_common_periods = 2;
    int max_common_periods = 8;
    double base_frequency_mhz = 1.0;

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

/// Union of every task's fields; only those belonging to `kind` are accepted or emitted.
struct TaskConfig {
    TaskKind kind = TaskKind::dc;
    // bias and probe
    std::optional<double> phi_e;
    std::vector<double> phi_e_grid;
    double target_gain_db = 20.0;
    double probe_power_dbm = -140.0;
    double probe_detuning_mhz = 1.0;
    std::optional<double> pump_frequency_ghz;
    std::optional<double> pump_power_dbm;
    // tune-up caps
    double tolerance_db = 0.05;
    double start_below_threshold_db = 10.0;
    double coarse_step_db = 1.0;
    double max_above_threshold_db = 20.0;
    // saturation
    std::vector<double> input_powers_dbm;
    double saturation_start_dbm = -130.0;
    double saturation_step_db = 4.0;
    double saturation_stop_dbm = -40.0;
    // gain curve
    std::vector<double> detuning_grid_mhz;
    // map
    std::vector<double> l_shunt_grid;
    std::vector<double> inv_beta_q_grid;
    std::vector<double> q_grid;
    double l_junction = 60.0;
    int n_squids = 25;
    double f0_target = 6.0;
    // biasmap
    std::vector<double> pump_power_grid_dbm;
    bool along_branch = true;
    // pce
    std::vector<double> frequency_grid_ghz;
    double guard = 1e-3;
    // fluxfft
    std::string input;
    double truncation_db = 20.0;
    int window_length = 3;
    // calibrate
    double two_chi_mhz = 0.0;
    double kappa_mhz = 0.0;
    double readout_ghz = 0.0;
    std::vector<std::pair<double, double>> points;
    std::vector<double> qubit_shift_mhz;

    friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "json"};

    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
    std::optional<CircuitConfig> circuit;
    SolverConfig solver;
    TaskConfig task;
    OutputConfig output;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Validates and defaults a JSON document. Throws ConfigError.
[[nodiscard]] RunConfig parse_config(const nlohmann::json& doc);
[[nodiscard]] RunConfig parse_config_text(const std::string& text);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved form; parse_config(to_json(c)) == c.
[[nodiscard]] nlohmann::json to_json(const RunConfig& config);

/// Applies "a.b.c=value" to a document; value is parsed as JSON, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace jpa
