#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "jpa/circuit.hpp"
#include "jpa/config.hpp"
#include "jpa/dynamics.hpp"
#include "jpa/metrics.hpp"

namespace jpa {

[[nodiscard]] const char* version_string();

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitNoConvergence = 3,
    kExitMapFailures = 4,
};

/// Circuit and operating bias described by a config's circuit block and task.phi_e.
struct ResolvedDevice {
    CircuitParams params;
    FluxBias bias;
};

[[nodiscard]] ResolvedDevice resolve_device(const CircuitConfig& circuit,
                                            std::optional<double> phi_e);
[[nodiscard]] SolverOptions solver_options(const RunConfig& config);
[[nodiscard]] ProbeSetup probe_setup(const RunConfig& config);

struct RunOutcome {
    int exit_code = kExitOk;
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> files;  ///< relative to the output directory, in write order
    std::string error;               ///< empty on success
};

/// Executes the task and writes its files plus manifest.json into config.output.directory.
/// Diagnostics go to `log`; physics failures become exit codes rather than exceptions.
RunOutcome run(const RunConfig& config, std::ostream& log);

}  // namespace jpa
