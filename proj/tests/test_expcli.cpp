#include "doctest.h"
#include "robstop/errors.hpp"
#include "robstop/expcli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace robstop;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = ROBSTOP_CONFIG_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("robstop_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config round trip") {
    for (auto name : {"constant", "oracle_tiny", "eg_rm_wedge"}) {
        auto c = ExperimentConfig::load(kConfigs / (std::string(name) + ".json"));
        auto j = c.to_json();
        CHECK(ExperimentConfig::from_json(j).to_json() == j);
    }
}

TEST_CASE("config errors") {
    auto j = ExperimentConfig::load(kConfigs / "constant.json").to_json();
    auto bad = j;
    bad["checks"]["speed"] = true;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["cascade"]["rho_hat"] = "guess";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["grid"]["N"] = 0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad["controls"]["list"][0]["b"] = {5.0};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    bad = j;
    bad.erase("payoff");
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::load(kConfigs / "missing.json"), IoError);
}

TEST_CASE("constant example: every check passes and the value is the constant") {
    auto cfg = ExperimentConfig::load(kConfigs / "constant.json");
    auto out = scratch("constant");
    std::ostringstream log;
    CHECK(run_experiment(cfg, out, log) == kOk);
    CHECK(log.str().find("FAIL") == std::string::npos);
    for (auto f : {"values.json", "ledger.csv", "gamma_star.json", "policy.json", "boundary.csv", "report.md"})
        CHECK(fs::exists(out / f));
    auto v = nlohmann::json::parse(slurp(out / "values.json"));
    CHECK(v["value"] == 1.5);
    std::ostringstream tab;
    CHECK(print_table(out, "convergence", tab) == kOk);
    std::istringstream in(tab.str());
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        CHECK(line.substr(line.rfind(',') + 1) == "1.5");
        ++rows;
    }
    CHECK(rows == 4 * 4 + 5 + 2);
    std::ostringstream sink;
    CHECK(print_table(out, "nonsense", sink) == kUsage);
    CHECK_THROWS_AS(print_table(scratch("empty"), "ledger", sink), IoError);
}

TEST_CASE("tiny example: ledger rows and oracle line") {
    auto cfg = ExperimentConfig::load(kConfigs / "oracle_tiny.json");
    auto out = scratch("tiny");
    std::ostringstream log;
    CHECK(run_experiment(cfg, out, log) == kOk);
    CHECK(log.str().find("PASS oracle agreement -- max abs diff") != std::string::npos);
    std::ostringstream tab;
    print_table(out, "ledger", tab);
    for (auto id : {"eh137,", "eh137b,", "et317,"}) CHECK(tab.str().find(id) != std::string::npos);
    std::ostringstream orc;
    CHECK(run_oracle(cfg, orc) == kOk);
}

TEST_CASE("reruns are byte-identical") {
    auto cfg = ExperimentConfig::load(kConfigs / "oracle_tiny.json");
    auto a = scratch("rerun_a"), b = scratch("rerun_b");
    std::ostringstream log;
    run_experiment(cfg, a, log);
    run_experiment(cfg, b, log);
    for (auto f : {"values.json", "ledger.csv", "gamma_star.json", "policy.json", "boundary.csv", "report.md"})
        CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("node cap maps to its own exit code") {
    auto cfg = ExperimentConfig::load(kConfigs / "oracle_tiny.json");
    cfg.max_nodes = 10;
    std::ostringstream log;
    CHECK_THROWS_AS(run_experiment(cfg, scratch("cap"), log), CapExceeded);
}
