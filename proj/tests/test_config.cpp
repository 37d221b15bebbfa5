#include "doctest.h"

#include <string>

#include "jpa/config.hpp"

using namespace jpa;
using nlohmann::json;

namespace {

json device_a() {
    return {{"n_squids", 25}, {"l_shunt", 15}, {"l_junction", 60}, {"q_target", 8.1}, {"f0_target", 6.0}};
}

std::string error_path(const json& doc) {
    try {
        (void)parse_config(doc);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("minimal dc config is defaulted") {
    const RunConfig c = parse_config({{"task", "dc"}, {"circuit", device_a()}});
    CHECK(c.task.kind == TaskKind::dc);
    CHECK(c.solver.base_frequency_mhz == 1.0);
    CHECK(c.solver.steps_per_pump_period == 512);
    CHECK(c.solver.tolerance == 1e-5);
    CHECK(c.solver.min_common_periods == 2);
    CHECK_FALSE(c.solver.warmup_periods);
    CHECK(c.task.target_gain_db == 20.0);
    CHECK(c.task.probe_power_dbm == -140.0);
    CHECK(c.task.probe_detuning_mhz == 1.0);
    CHECK(c.task.tolerance_db == 0.05);
    CHECK(c.output.directory == "out");
    CHECK(c.output.formats == std::vector<std::string>{"csv", "json"});
    REQUIRE(c.circuit);
    CHECK(c.circuit->l_shunt == 15.0);
}

TEST_CASE("validation errors carry a JSON pointer") {
    json neg = {{"task", "dc"}, {"circuit", device_a()}};
    neg["circuit"]["l_shunt"] = -15;
    CHECK(error_path(neg) == "/circuit/l_shunt");

    json hyst = {{"task", "dc"}, {"circuit", device_a()}};
    hyst["circuit"]["l_shunt"] = 70;
    CHECK(error_path(hyst) == "/circuit/l_shunt");

    CHECK(error_path({{"task", {{"kind", "map"}, {"l_shunt_grid", {10, 20}}}}}) == "/task/q_grid");
    CHECK(error_path({{"task", {{"kind", "map"}, {"q_grid", {4, 6}}}}}) == "/task/l_shunt_grid");

    json unknown = {{"task", "dc"}, {"circuit", device_a()}};
    unknown["circuit"]["l_sunt"] = 1;
    CHECK(error_path(unknown) == "/circuit/l_sunt");
    CHECK(error_path({{"task", "dc"}, {"circuit", device_a()}, {"extra", 1}}) == "/extra");
    CHECK(error_path({{"task", {{"kind", "dc"}, {"q_grid", {1}}}}, {"circuit", device_a()}}) ==
          "/task/q_grid");

    CHECK(error_path({{"circuit", device_a()}}) == "/task");
    CHECK(error_path({{"task", "warp"}, {"circuit", device_a()}}) == "/task");
    CHECK(error_path({{"task", "tune"}}) == "/circuit");
    CHECK(error_path({{"task", {{"kind", "gain"}}}, {"circuit", device_a()}}) == "/task/detuning_grid_mhz");
    CHECK(error_path({{"task", "pce"}, {"circuit", device_a()}}) == "/circuit/c_coupling");
    CHECK(error_path({{"task", {{"kind", "fluxfft"}}}}) == "/task/input");
    CHECK(error_path({{"task", {{"kind", "calibrate"}, {"two_chi_mhz", 0.348}, {"kappa_mhz", 1},
                                {"readout_ghz", 5.7}, {"points", {{1, 2}}}}}}) == "/task/points");
    CHECK(error_path({{"task", {{"kind", "biasmap"}, {"phi_e_grid", {1.8}},
                                {"pump_power_grid_dbm", {-80, -90}}}},
                      {"circuit", device_a()}}) == "/task/pump_power_grid_dbm");

    json wrong_type = {{"task", "dc"}, {"circuit", device_a()}, {"solver", {{"tolerance", "small"}}}};
    CHECK(error_path(wrong_type) == "/solver/tolerance");
    json half = {{"task", "dc"}, {"circuit", {{"l_shunt", 15}, {"c_main", 2}}}};
    CHECK(error_path(half) == "/circuit/r_env");
    json both = {{"task", "dc"}, {"circuit", device_a()}};
    both["circuit"]["c_main"] = 2;
    CHECK(error_path(both) == "/circuit");
    json fmt = {{"task", "dc"}, {"circuit", device_a()}, {"output", {{"formats", {"xml"}}}}};
    CHECK(error_path(fmt) == "/output/formats/0");
    CHECK(error_path({{"task", {{"kind", "map"}, {"q_grid", {4}}, {"l_shunt_grid", {10}}}},
                      {"circuit", device_a()}}) == "/circuit");
    CHECK_THROWS_AS((void)parse_config_text("{not json"), ConfigError);
}

TEST_CASE("resolved config round-trips") {
    const json docs[] = {
        {{"task", "dc"}, {"circuit", device_a()}},
        {{"task", {{"kind", "tune"}, {"phi_e", 1.7}, {"pump_frequency_ghz", 11.62}}},
         {"circuit", device_a()},
         {"solver", {{"warmup_periods", 500}, {"tolerance", 1e-6}}}},
        {{"task", {{"kind", "gain"}, {"detuning_grid_mhz", {-3, -1, 1, 3}}, {"pump_power_dbm", -80.5}}},
         {"circuit", device_a()}},
        {{"task", {{"kind", "saturate"}, {"input_powers_dbm", {-130, -120.25}}}}, {"circuit", device_a()}},
        {{"task", {{"kind", "map"}, {"inv_beta_q_grid", {0.3, 0.4}}, {"q_grid", {6, 8}}}},
         {"output", {{"directory", "x/y"}, {"formats", {"csv"}}}}},
        {{"task", {{"kind", "biasmap"}, {"phi_e_grid", {1.5, 1.8}}, {"pump_power_grid_dbm", {-90, -80}},
                   {"along_branch", false}}},
         {"circuit", device_a()}},
        {{"task", {{"kind", "pce"}, {"guard", 2e-3}}},
         {"circuit", {{"l_shunt", 15}, {"c_main", 2}, {"r_env", 50}, {"c_coupling", 0.26}}}},
        {{"task", {{"kind", "fluxfft"}, {"input", "sweep.csv"}, {"truncation_db", 25}}}},
        {{"task", {{"kind", "calibrate"}, {"two_chi_mhz", 0.348}, {"kappa_mhz", 1}, {"readout_ghz", 5.7},
                   {"points", {{0.1, 1}, {0.2, 4}, {0.3, 9}, {0.4, 16}, {0.5, 25}}},
                   {"qubit_shift_mhz", {3.48}}}}},
    };
    for (const json& d : docs) {
        CAPTURE(d.dump());
        const RunConfig c = parse_config(d);
        const json resolved = to_json(c);
        CHECK(parse_config(resolved) == c);
        CHECK(parse_config_text(resolved.dump()) == c);
        CHECK(to_json(parse_config(resolved)) == resolved);
    }
}

TEST_CASE("overrides") {
    json doc = {{"task", "tune"}, {"circuit", device_a()}};
    apply_override(doc, "circuit.l_shunt=12.5");
    apply_override(doc, "task.target_gain_db=17");
    apply_override(doc, "output.directory=results/run1");
    const RunConfig c = parse_config(doc);
    CHECK(c.circuit->l_shunt == 12.5);
    CHECK(c.task.kind == TaskKind::tune);
    CHECK(c.task.target_gain_db == 17.0);
    CHECK(c.output.directory == "results/run1");

    json grid = {{"task", {{"kind", "map"}}}};
    apply_override(grid, "task.q_grid=[4,6,8]");
    apply_override(grid, "task.inv_beta_q_grid=[0.3]");
    CHECK(parse_config(grid).task.q_grid == std::vector<double>{4, 6, 8});
    CHECK_THROWS_AS(apply_override(grid, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(grid, "task..x=1"), ConfigError);
}

TEST_CASE("task names") {
    for (TaskKind k : {TaskKind::dc, TaskKind::tune, TaskKind::gain, TaskKind::saturate, TaskKind::map,
                       TaskKind::biasmap, TaskKind::pce, TaskKind::fluxfft, TaskKind::calibrate}) {
        CHECK(task_from_string(to_string(k)) == k);
    }
    CHECK_FALSE(task_from_string("fit"));
}
