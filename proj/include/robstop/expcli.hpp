#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "robstop/cascade.hpp"
#include "robstop/lattice.hpp"
#include "robstop/processes.hpp"

namespace robstop {

enum ExitCode { kOk = 0, kCheckFail = 1, kUsage = 2, kCap = 3, kIo = 4 };

struct ExperimentConfig {
    std::string name = "experiment";
    TimeGrid grid;
    ControlSet controls;
    PayoffSpec payoff;
    IndexSpec index;
    CascadeConfig cascade;
    std::string rho_hat = "exhaustive";  // exhaustive | analytic | calibrated
    std::map<std::string, bool> checks{{"dpp", true}, {"martingale", true}, {"ledger", true},
                                       {"oracle", true}, {"modulus", true}};
    unsigned long long seed = 1;
    std::string output;
    double max_nodes = static_cast<double>(kDefaultNodeCap);
    double oracle_cap = 5e7;

    bool enabled(const std::string& check) const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);  // throws ConfigError
    static ExperimentConfig load(const std::filesystem::path& p);
};

ModulusHat make_rho_hat(const ExperimentConfig& cfg, const TreeModel& tree);

// Run the full pipeline and write the results directory; returns an ExitCode.
int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int print_table(const std::filesystem::path& dir, const std::string& which, std::ostream& out);
int run_oracle(const ExperimentConfig& cfg, std::ostream& out);

int cli_main(int argc, char** argv);

}  // namespace robstop
