// Command-line front end: one subcommand per task.
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "jpa/config.hpp"
#include "jpa/parallel.hpp"
#include "jpa/run.hpp"

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    unsigned threads = 0;
};

nlohmann::json load_document(const Options& opt, jpa::TaskKind kind) {
    nlohmann::json doc = nlohmann::json::object();
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) throw jpa::ConfigError("/", "cannot read config file " + opt.config_path);
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw jpa::ConfigError("/", std::string("invalid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw jpa::ConfigError("/", "expected an object");
    }
    const std::string name = jpa::to_string(kind);
    if (!doc.contains("task")) {
        doc["task"] = {{"kind", name}};
    } else {
        const auto& t = doc["task"];
        const std::string given = t.is_string() ? t.get<std::string>()
                                  : t.is_object() && t.contains("kind") && t["kind"].is_string()
                                      ? t["kind"].get<std::string>()
                                      : name;
        if (given != name) {
            throw jpa::ConfigError(t.is_string() ? "/task" : "/task/kind",
                                   "config is for task '" + given + "', not '" + name + "'");
        }
    }
    for (const std::string& o : opt.overrides) jpa::apply_override(doc, o);
    if (!opt.out_dir.empty()) doc["output"]["directory"] = opt.out_dir;
    return doc;
}

int execute(const Options& opt, jpa::TaskKind kind) {
    jpa::RunConfig config;
    try {
        config = jpa::parse_config(load_document(opt, kind));
    } catch (const jpa::ConfigError& e) {
        std::cerr << "config error at " << e.path() << ": " << e.what() << '\n';
        return jpa::kExitConfig;
    }
    if (opt.threads > 0) jpa::set_thread_count(opt.threads);
    const jpa::RunOutcome outcome = jpa::run(config, std::cerr);
    std::cout << outcome.summary.dump(2) << '\n';
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rf-SQUID array parametric amplifier simulator"};
    app.set_version_flag("--version", std::string(jpa::version_string()));
    app.require_subcommand(1);

    Options opt;
    const std::pair<jpa::TaskKind, const char*> tasks[] = {
        {jpa::TaskKind::dc, "DC operating point and flux tunability"},
        {jpa::TaskKind::tune, "find the pump power for the target gain"},
        {jpa::TaskKind::gain, "gain versus probe detuning"},
        {jpa::TaskKind::saturate, "1 dB compression point and pump efficiency"},
        {jpa::TaskKind::map, "design map over shunt inductance (or 1/(beta Q)) and Q"},
        {jpa::TaskKind::biasmap, "gain over flux bias and pump power"},
        {jpa::TaskKind::pce, "pump coupling efficiency spectrum"},
        {jpa::TaskKind::fluxfft, "DCT of a measured flux sweep"},
        {jpa::TaskKind::calibrate, "Stark-shift drive power calibration"},
    };
    std::vector<std::pair<CLI::App*, jpa::TaskKind>> subs;
    for (const auto& [kind, help] : tasks) {
        CLI::App* sub = app.add_subcommand(jpa::to_string(kind), help);
        sub->add_option("-c,--config", opt.config_path, "JSON run configuration")
            ->check(CLI::ExistingFile);
        sub->add_option("-s,--set", opt.overrides,
                        "override a field, e.g. circuit.l_shunt=15 or task.q_grid=[4,6]");
        sub->add_option("-o,--out", opt.out_dir, "output directory");
        sub->add_option("-j,--threads", opt.threads, "worker threads (default: JPA_THREADS or all cores)")
            ->check(CLI::PositiveNumber);
        subs.emplace_back(sub, kind);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : jpa::kExitConfig;
    }
    for (const auto& [sub, kind] : subs) {
        if (sub->parsed()) {
            try {
                return execute(opt, kind);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << '\n';
                return jpa::kExitFailure;
            }
        }
    }
    return jpa::kExitFailure;
}
