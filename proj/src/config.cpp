#include "jpa/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace jpa {

using nlohmann::json;

namespace {

constexpr std::pair<TaskKind, const char*> kTaskNames[] = {
    {TaskKind::dc, "dc"},           {TaskKind::tune, "tune"},
    {TaskKind::gain, "gain"},       {TaskKind::saturate, "saturate"},
    {TaskKind::map, "map"},         {TaskKind::biasmap, "biasmap"},
    {TaskKind::pce, "pce"},         {TaskKind::fluxfft, "fluxfft"},
    {TaskKind::calibrate, "calibrate"},
};

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }

const json& require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
    return j;
}

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(child(path, key), "unknown key");
    }
}

double read_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    return v;
}

int read_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
    return j.get<int>();
}

std::vector<double> read_numbers(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_number(j[i], child(path, std::to_string(i))));
    return out;
}

void positive(double v, const std::string& path) {
    if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
}

// ---- task field table

using Points = std::vector<std::pair<double, double>>;
using Member = std::variant<double TaskConfig::*, std::optional<double> TaskConfig::*,
                            std::vector<double> TaskConfig::*, int TaskConfig::*,
                            bool TaskConfig::*, std::string TaskConfig::*, Points TaskConfig::*>;

struct Field {
    const char* name;
    Member member;
};

const Field kFields[] = {
    {"phi_e", &TaskConfig::phi_e},
    {"phi_e_grid", &TaskConfig::phi_e_grid},
    {"target_gain_db", &TaskConfig::target_gain_db},
    {"probe_power_dbm", &TaskConfig::probe_power_dbm},
    {"probe_detuning_mhz", &TaskConfig::probe_detuning_mhz},
    {"pump_frequency_ghz", &TaskConfig::pump_frequency_ghz},
    {"pump_power_dbm", &TaskConfig::pump_power_dbm},
    {"tolerance_db", &TaskConfig::tolerance_db},
    {"start_below_threshold_db", &TaskConfig::start_below_threshold_db},
    {"coarse_step_db", &TaskConfig::coarse_step_db},
    {"max_above_threshold_db", &TaskConfig::max_above_threshold_db},
    {"input_powers_dbm", &TaskConfig::input_powers_dbm},
    {"saturation_start_dbm", &TaskConfig::saturation_start_dbm},
    {"saturation_step_db", &TaskConfig::saturation_step_db},
    {"saturation_stop_dbm", &TaskConfig::saturation_stop_dbm},
    {"detuning_grid_mhz", &TaskConfig::detuning_grid_mhz},
    {"l_shunt_grid", &TaskConfig::l_shunt_grid},
    {"inv_beta_q_grid", &TaskConfig::inv_beta_q_grid},
    {"q_grid", &TaskConfig::q_grid},
    {"l_junction", &TaskConfig::l_junction},
    {"n_squids", &TaskConfig::n_squids},
    {"f0_target", &TaskConfig::f0_target},
    {"pump_power_grid_dbm", &TaskConfig::pump_power_grid_dbm},
    {"along_branch", &TaskConfig::along_branch},
    {"frequency_grid_ghz", &TaskConfig::frequency_grid_ghz},
    {"guard", &TaskConfig::guard},
    {"input", &TaskConfig::input},
    {"truncation_db", &TaskConfig::truncation_db},
    {"window_length", &TaskConfig::window_length},
    {"two_chi_mhz", &TaskConfig::two_chi_mhz},
    {"kappa_mhz", &TaskConfig::kappa_mhz},
    {"readout_ghz", &TaskConfig::readout_ghz},
    {"points", &TaskConfig::points},
    {"qubit_shift_mhz", &TaskConfig::qubit_shift_mhz},
};

std::set<std::string> task_keys(TaskKind k) {
    const std::set<std::string> probe{"phi_e", "target_gain_db", "probe_power_dbm",
                                      "probe_detuning_mhz", "pump_frequency_ghz"};
    const std::set<std::string> caps{"tolerance_db", "start_below_threshold_db", "coarse_step_db",
                                     "max_above_threshold_db"};
    const std::set<std::string> sat{"saturation_start_dbm", "saturation_step_db",
                                    "saturation_stop_dbm"};
    std::set<std::string> keys;
    auto add = [&](const std::set<std::string>& s) { keys.insert(s.begin(), s.end()); };
    switch (k) {
        case TaskKind::dc: add({"phi_e", "phi_e_grid"}); break;
        case TaskKind::tune: add(probe); add(caps); break;
        case TaskKind::gain: add(probe); add(caps); add({"pump_power_dbm", "detuning_grid_mhz"}); break;
        case TaskKind::saturate:
            add(probe); add(caps); add(sat); add({"pump_power_dbm", "input_powers_dbm"});
            break;
        case TaskKind::map:
            add({"phi_e", "target_gain_db", "probe_power_dbm", "probe_detuning_mhz"});
            add(caps); add(sat);
            add({"l_shunt_grid", "inv_beta_q_grid", "q_grid", "l_junction", "n_squids", "f0_target"});
            break;
        case TaskKind::biasmap:
            add({"phi_e_grid", "pump_power_grid_dbm", "target_gain_db", "probe_power_dbm",
                 "probe_detuning_mhz", "tolerance_db", "along_branch"});
            add(sat);
            break;
        case TaskKind::pce: add({"phi_e", "frequency_grid_ghz", "guard"}); break;
        case TaskKind::fluxfft: add({"input", "truncation_db", "window_length"}); break;
        case TaskKind::calibrate:
            add({"two_chi_mhz", "kappa_mhz", "readout_ghz", "points", "qubit_shift_mhz"});
            break;
    }
    return keys;
}

void read_field(TaskConfig& t, const Field& f, const json& j, const std::string& path) {
    std::visit(
        [&](auto member) {
            using T = std::remove_cvref_t<decltype(t.*member)>;
            if constexpr (std::is_same_v<T, double>) {
                t.*member = read_number(j, path);
            } else if constexpr (std::is_same_v<T, std::optional<double>>) {
                t.*member = read_number(j, path);
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                t.*member = read_numbers(j, path);
            } else if constexpr (std::is_same_v<T, int>) {
                t.*member = read_int(j, path);
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
                t.*member = j.get<bool>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!j.is_string()) throw ConfigError(path, "expected a string");
                t.*member = j.get<std::string>();
            } else {
                if (!j.is_array()) throw ConfigError(path, "expected an array of [amplitude, photons]");
                Points pts;
                for (std::size_t i = 0; i < j.size(); ++i) {
                    const std::string p = child(path, std::to_string(i));
                    const std::vector<double> pair = read_numbers(j[i], p);
                    if (pair.size() != 2) throw ConfigError(p, "expected [amplitude, photons]");
                    pts.emplace_back(pair[0], pair[1]);
                }
                t.*member = std::move(pts);
            }
        },
        f.member);
}

void write_field(const TaskConfig& t, const Field& f, json& out) {
    std::visit(
        [&](auto member) {
            using T = std::remove_cvref_t<decltype(t.*member)>;
            const auto& v = t.*member;
            if constexpr (std::is_same_v<T, std::optional<double>>) {
                if (v) out[f.name] = *v;
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                if (!v.empty()) out[f.name] = v;
            } else if constexpr (std::is_same_v<T, Points>) {
                if (!v.empty()) {
                    json arr = json::array();
                    for (const auto& [a, n] : v) arr.push_back({a, n});
                    out[f.name] = arr;
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.empty()) out[f.name] = v;
            } else {
                out[f.name] = v;
            }
        },
        f.member);
}

CircuitConfig parse_circuit(const json& j) {
    const std::string path = "/circuit";
    require_object(j, path);
    reject_unknown(j, path, {"n_squids", "l_shunt", "l_junction", "c_main", "r_env", "c_coupling",
                             "q_target", "f0_target"});
    CircuitConfig c;
    if (j.contains("n_squids")) c.n_squids = read_int(j["n_squids"], child(path, "n_squids"));
    if (c.n_squids < 1) throw ConfigError(child(path, "n_squids"), "must be >= 1");
    if (!j.contains("l_shunt")) throw ConfigError(child(path, "l_shunt"), "missing required field");
    c.l_shunt = read_number(j["l_shunt"], child(path, "l_shunt"));
    positive(c.l_shunt, child(path, "l_shunt"));
    if (j.contains("l_junction")) c.l_junction = read_number(j["l_junction"], child(path, "l_junction"));
    positive(c.l_junction, child(path, "l_junction"));
    if (c.l_shunt >= c.l_junction) {
        throw ConfigError(child(path, "l_shunt"), "beta = l_shunt / l_junction must be < 1");
    }
    auto opt = [&](const char* key, std::optional<double>& dst) {
        if (j.contains(key)) {
            dst = read_number(j[key], child(path, key));
            positive(*dst, child(path, key));
        }
    };
    opt("c_main", c.c_main);
    opt("r_env", c.r_env);
    opt("c_coupling", c.c_coupling);
    opt("q_target", c.q_target);
    opt("f0_target", c.f0_target);
    const bool explicit_rc = c.c_main || c.r_env;
    const bool family = c.q_target || c.f0_target;
    if (explicit_rc == family) {
        throw ConfigError(path, "give either c_main and r_env, or q_target and f0_target");
    }
    if (explicit_rc && !(c.c_main && c.r_env)) {
        throw ConfigError(child(path, c.c_main ? "r_env" : "c_main"), "missing required field");
    }
    if (family && !(c.q_target && c.f0_target)) {
        throw ConfigError(child(path, c.q_target ? "f0_target" : "q_target"),
                          "missing required field");
    }
    return c;
}

SolverConfig parse_solver(const json& j) {
    const std::string path = "/solver";
    require_object(j, path);
    reject_unknown(j, path, {"steps_per_pump_period", "tolerance", "warmup_periods",
                             "min_common_periods", "max_common_periods", "base_frequency_mhz"});
    SolverConfig s;
    if (j.contains("steps_per_pump_period")) {
        s.steps_per_pump_period = read_int(j["steps_per_pump_period"], child(path, "steps_per_pump_period"));
    }
    if (s.steps_per_pump_period < 8) {
        throw ConfigError(child(path, "steps_per_pump_period"), "must be >= 8");
    }
    if (j.contains("tolerance")) s.tolerance = read_number(j["tolerance"], child(path, "tolerance"));
    positive(s.tolerance, child(path, "tolerance"));
    if (j.contains("warmup_periods")) {
        const std::string p = child(path, "warmup_periods");
        if (!j["warmup_periods"].is_number_integer() || j["warmup_periods"].get<std::int64_t>() < 0) {
            throw ConfigError(p, "expected a non-negative integer");
        }
        s.warmup_periods = j["warmup_periods"].get<std::int64_t>();
    }
    if (j.contains("min_common_periods")) {
        s.min_common_periods = read_int(j["min_common_periods"], child(path, "min_common_periods"));
    }
    if (s.min_common_periods < 2) throw ConfigError(child(path, "min_common_periods"), "must be >= 2");
    if (j.contains("max_common_periods")) {
        s.max_common_periods = read_int(j["max_common_periods"], child(path, "max_common_periods"));
    }
    if (s.max_common_periods < s.min_common_periods) {
        throw ConfigError(child(path, "max_common_periods"), "must be >= min_common_periods");
    }
    if (j.contains("base_frequency_mhz")) {
        s.base_frequency_mhz = read_number(j["base_frequency_mhz"], child(path, "base_frequency_mhz"));
    }
    positive(s.base_frequency_mhz, child(path, "base_frequency_mhz"));
    return s;
}

void validate_task(const TaskConfig& t, const std::optional<CircuitConfig>& circuit) {
    const std::string path = "/task";
    auto need = [&](bool ok, const char* key, const char* what = "missing required field") {
        if (!ok) throw ConfigError(child(path, key), what);
    };
    auto all_positive = [&](const std::vector<double>& v, const char* key) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0)) throw ConfigError(child(child(path, key), std::to_string(i)), "must be > 0");
        }
    };
    const bool uses_circuit = t.kind != TaskKind::map && t.kind != TaskKind::fluxfft &&
                              t.kind != TaskKind::calibrate;
    if (uses_circuit && !circuit) throw ConfigError("/circuit", "missing required block");
    if (!uses_circuit && circuit) throw ConfigError("/circuit", "not used by this task");

    switch (t.kind) {
        case TaskKind::gain:
            need(!t.detuning_grid_mhz.empty(), "detuning_grid_mhz");
            for (std::size_t i = 0; i < t.detuning_grid_mhz.size(); ++i) {
                if (t.detuning_grid_mhz[i] == 0.0) {
                    throw ConfigError(child(child(path, "detuning_grid_mhz"), std::to_string(i)),
                                      "detuning must be nonzero");
                }
            }
            break;
        case TaskKind::map:
            need(!t.q_grid.empty(), "q_grid");
            all_positive(t.q_grid, "q_grid");
            if (t.l_shunt_grid.empty() == t.inv_beta_q_grid.empty()) {
                throw ConfigError(child(path, "l_shunt_grid"),
                                  "give exactly one of l_shunt_grid and inv_beta_q_grid");
            }
            all_positive(t.l_shunt_grid, "l_shunt_grid");
            all_positive(t.inv_beta_q_grid, "inv_beta_q_grid");
            need(t.l_junction > 0.0, "l_junction", "must be > 0");
            need(t.n_squids >= 1, "n_squids", "must be >= 1");
            need(t.f0_target > 0.0, "f0_target", "must be > 0");
            break;
        case TaskKind::biasmap:
            need(!t.phi_e_grid.empty(), "phi_e_grid");
            need(!t.pump_power_grid_dbm.empty(), "pump_power_grid_dbm");
            need(std::is_sorted(t.pump_power_grid_dbm.begin(), t.pump_power_grid_dbm.end()),
                 "pump_power_grid_dbm", "must be ascending");
            for (std::size_t i = 0; i < t.phi_e_grid.size(); ++i) {
                const double p = t.phi_e_grid[i];
                if (!(p > 0.0 && p < 3.141592653589793)) {
                    throw ConfigError(child(child(path, "phi_e_grid"), std::to_string(i)),
                                      "must lie in (0, pi)");
                }
            }
            break;
        case TaskKind::pce:
            if (!circuit->c_coupling) throw ConfigError("/circuit/c_coupling", "required by the pce task");
            all_positive(t.frequency_grid_ghz, "frequency_grid_ghz");
            need(t.guard > 0.0, "guard", "must be > 0");
            break;
        case TaskKind::fluxfft:
            need(!t.input.empty(), "input");
            need(t.window_length >= 1, "window_length", "must be >= 1");
            break;
        case TaskKind::calibrate:
            need(t.two_chi_mhz > 0.0, "two_chi_mhz", "must be > 0");
            need(t.kappa_mhz > 0.0, "kappa_mhz", "must be > 0");
            need(t.readout_ghz > 0.0, "readout_ghz", "must be > 0");
            need(t.points.size() >= 5, "points", "needs at least 5 [amplitude, photons] pairs");
            break;
        case TaskKind::dc:
        case TaskKind::tune:
        case TaskKind::saturate:
            break;
    }
    if (t.kind == TaskKind::tune || t.kind == TaskKind::gain || t.kind == TaskKind::saturate ||
        t.kind == TaskKind::map) {
        need(t.tolerance_db > 0.0, "tolerance_db", "must be > 0");
        need(t.coarse_step_db > 0.0, "coarse_step_db", "must be > 0");
        need(t.probe_detuning_mhz != 0.0, "probe_detuning_mhz", "must be nonzero");
    }
    if (t.kind == TaskKind::saturate || t.kind == TaskKind::map || t.kind == TaskKind::biasmap) {
        need(t.saturation_step_db > 0.0, "saturation_step_db", "must be > 0");
    }
}

TaskConfig parse_task(const json& j) {
    const std::string path = "/task";
    TaskConfig t;
    if (j.is_string()) {
        const auto kind = task_from_string(j.get<std::string>());
        if (!kind) throw ConfigError(path, "unknown task '" + j.get<std::string>() + "'");
        t.kind = *kind;
        return t;
    }
    require_object(j, path);
    if (!j.contains("kind")) throw ConfigError(child(path, "kind"), "missing required field");
    if (!j["kind"].is_string()) throw ConfigError(child(path, "kind"), "expected a string");
    const auto kind = task_from_string(j["kind"].get<std::string>());
    if (!kind) throw ConfigError(child(path, "kind"), "unknown task '" + j["kind"].get<std::string>() + "'");
    t.kind = *kind;
    std::set<std::string> allowed = task_keys(t.kind);
    allowed.insert("kind");
    reject_unknown(j, path, allowed);
    for (const Field& f : kFields) {
        if (j.contains(f.name)) read_field(t, f, j[f.name], child(path, f.name));
    }
    return t;
}

OutputConfig parse_output(const json& j) {
    const std::string path = "/output";
    require_object(j, path);
    reject_unknown(j, path, {"directory", "formats"});
    OutputConfig o;
    if (j.contains("directory")) {
        if (!j["directory"].is_string() || j["directory"].get<std::string>().empty()) {
            throw ConfigError(child(path, "directory"), "expected a non-empty string");
        }
        o.directory = j["directory"].get<std::string>();
    }
    if (j.contains("formats")) {
        const json& f = j["formats"];
        if (!f.is_array() || f.empty()) throw ConfigError(child(path, "formats"), "expected a non-empty array");
        o.formats.clear();
        for (std::size_t i = 0; i < f.size(); ++i) {
            const std::string p = child(child(path, "formats"), std::to_string(i));
            if (!f[i].is_string()) throw ConfigError(p, "expected \"csv\" or \"json\"");
            const std::string v = f[i].get<std::string>();
            if (v != "csv" && v != "json") throw ConfigError(p, "expected \"csv\" or \"json\"");
            if (std::find(o.formats.begin(), o.formats.end(), v) == o.formats.end()) o.formats.push_back(v);
        }
    }
    return o;
}

}  // namespace

const char* to_string(TaskKind k) {
    for (const auto& [kind, name] : kTaskNames) {
        if (kind == k) return name;
    }
    return "unknown";
}

std::optional<TaskKind> task_from_string(const std::string& s) {
    for (const auto& [kind, name] : kTaskNames) {
        if (s == name) return kind;
    }
    return std::nullopt;
}

RunConfig parse_config(const json& doc) {
    require_object(doc, "");
    reject_unknown(doc, "", {"circuit", "solver", "task", "output"});
    RunConfig cfg;
    if (!doc.contains("task")) throw ConfigError("/task", "missing required field");
    cfg.task = parse_task(doc["task"]);
    if (doc.contains("circuit")) cfg.circuit = parse_circuit(doc["circuit"]);
    if (doc.contains("solver")) cfg.solver = parse_solver(doc["solver"]);
    if (doc.contains("output")) cfg.output = parse_output(doc["output"]);
    validate_task(cfg.task, cfg.circuit);
    return cfg;
}

RunConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("/", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

json to_json(const RunConfig& cfg) {
    json out = json::object();
    if (cfg.circuit) {
        const CircuitConfig& c = *cfg.circuit;
        json j = {{"n_squids", c.n_squids}, {"l_shunt", c.l_shunt}, {"l_junction", c.l_junction}};
        if (c.c_main) j["c_main"] = *c.c_main;
        if (c.r_env) j["r_env"] = *c.r_env;
        if (c.c_coupling) j["c_coupling"] = *c.c_coupling;
        if (c.q_target) j["q_target"] = *c.q_target;
        if (c.f0_target) j["f0_target"] = *c.f0_target;
        out["circuit"] = j;
    }
    json s = {{"steps_per_pump_period", cfg.solver.steps_per_pump_period},
              {"tolerance", cfg.solver.tolerance},
              {"min_common_periods", cfg.solver.min_common_periods},
              {"max_common_periods", cfg.solver.max_common_periods},
              {"base_frequency_mhz", cfg.solver.base_frequency_mhz}};
    if (cfg.solver.warmup_periods) s["warmup_periods"] = *cfg.solver.warmup_periods;
    out["solver"] = s;

    json t = {{"kind", to_string(cfg.task.kind)}};
    const std::set<std::string> keys = task_keys(cfg.task.kind);
    for (const Field& f : kFields) {
        if (keys.count(f.name)) write_field(cfg.task, f, t);
    }
    out["task"] = t;
    out["output"] = {{"directory", cfg.output.directory}, {"formats", cfg.output.formats}};
    return out;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("/", "override '" + assignment + "' is not of the form path=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].empty()) throw ConfigError("/", "override path '" + key + "' has an empty part");
        if (node->is_null()) {
            *node = json::object();
        } else if (!node->is_object()) {
            if (node->is_string() && i == 1 && parts[0] == "task") {
                // "task": "tune" shorthand: promote to the object form
                *node = json{{"kind", node->get<std::string>()}};
            } else {
                throw ConfigError("/" + key, "override descends into a non-object");
            }
        }
        node = &(*node)[parts[i]];
    }
    *node = value;
}

}  // namespace jpa
