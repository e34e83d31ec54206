#include "robstop/expcli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "robstop/errors.hpp"
#include "robstop/oracle.hpp"
#include "robstop/parallel.hpp"
#include "robstop/snell.hpp"

namespace robstop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Eigen::VectorXd vec(const json& j, int d, const char* what) {
    auto v = j.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d) throw ConfigError(std::string(what) + " has wrong dimension");
    return Eigen::Map<Eigen::VectorXd>(v.data(), d);
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << text;
    if (!f) throw IoError("write failed for " + p.string());
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

struct CheckLine {
    std::string name;
    bool gating;  // diagnostics never fail the run
    bool pass;
    std::string detail;
};

int exit_code(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Cap: return kCap;
        case ErrorKind::Io: return kIo;
        case ErrorKind::Config: return kUsage;
        default: return kCheckFail;
    }
}

}  // namespace

bool ExperimentConfig::enabled(const std::string& check) const {
    auto it = checks.find(check);
    return it != checks.end() && it->second;
}

json ExperimentConfig::to_json() const {
    json ctl = json::array();
    for (const auto& c : controls.controls) ctl.push_back({{"b", to_vec(c.b)}, {"sigma", to_vec(c.sigma)}});
    return {{"name", name},
            {"grid", {{"T", grid.T}, {"N", grid.N}}},
            {"controls", {{"d", controls.d}, {"ell", controls.ell}, {"list", ctl}}},
            {"payoff", payoff.to_json()},
            {"index", index.to_json()},
            {"cascade", {{"n_max", cascade.n_max}, {"k_max", cascade.k_max}, {"rho_hat", rho_hat}}},
            {"checks", checks},
            {"seed", seed},
            {"output", output},
            {"caps", {{"max_nodes", max_nodes}, {"oracle_strategies", oracle_cap}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    try {
        ExperimentConfig c;
        c.name = j.value("name", c.name);
        c.grid.T = j.at("grid").at("T").get<double>();
        c.grid.N = j.at("grid").at("N").get<int>();
        const auto& cj = j.at("controls");
        c.controls.ell = cj.at("ell").get<double>();
        c.controls.d = cj.value("d", static_cast<int>(cj.at("list").at(0).at("b").size()));
        for (const auto& u : cj.at("list"))
            c.controls.controls.push_back({vec(u.at("b"), c.controls.d, "b"), vec(u.at("sigma"), c.controls.d, "sigma")});
        c.payoff = PayoffSpec::from_json(j.at("payoff"));
        c.index = IndexSpec::from_json(j.at("index"));
        if (j.contains("cascade")) {
            const auto& k = j.at("cascade");
            c.cascade.n_max = k.value("n_max", c.cascade.n_max);
            c.cascade.k_max = k.value("k_max", c.cascade.k_max);
            c.rho_hat = k.value("rho_hat", c.rho_hat);
        }
        if (j.contains("checks"))
            for (auto& [k, v] : j.at("checks").items()) {
                if (!c.checks.count(k)) throw ConfigError("unknown check '" + k + "'");
                c.checks[k] = v.get<bool>();
            }
        c.seed = j.value("seed", c.seed);
        c.output = j.value("output", "results/" + c.name);
        if (j.contains("caps")) {
            c.max_nodes = j.at("caps").value("max_nodes", c.max_nodes);
            c.oracle_cap = j.at("caps").value("oracle_strategies", c.oracle_cap);
        }
        if (c.rho_hat != "exhaustive" && c.rho_hat != "analytic" && c.rho_hat != "calibrated")
            throw ConfigError("rho_hat must be exhaustive, analytic or calibrated");
        if (c.cascade.n_max < 1 || c.cascade.k_max < 1) throw ConfigError("n_max and k_max must be >= 1");
        c.grid.validate();
        c.controls.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    } catch (const BadGrid& e) {
        throw ConfigError(e.what());
    } catch (const BadControl& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig ExperimentConfig::load(const fs::path& p) {
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    return from_json(j);
}

ModulusHat make_rho_hat(const ExperimentConfig& cfg, const TreeModel& tree) {
    const auto& rho = cfg.payoff.rho0;
    if (cfg.rho_hat == "analytic") return ModulusHat::analytic(rho, cfg.controls.ell, cfg.controls.d);
    if (cfg.rho_hat == "calibrated") return ModulusHat::calibrated(tree, rho, default_delta_grid(tree.grid()));
    return ModulusHat::exhaustive(tree, rho);
}

int run_experiment(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    TreeModel tree = build_tree(cfg.grid, cfg.controls, static_cast<std::size_t>(cfg.max_nodes));
    ModulusHat hat = make_rho_hat(cfg, tree);
    CascadeConfig cc = cfg.cascade;
    cc.workers = default_workers();
    CascadeResult res = build_cascade(tree, cfg.payoff, cfg.index, hat, cc);
    std::vector<CheckLine> lines;

    {
        // the configured moduli are only trusted once they hold on this tree
        const auto& rho = cfg.payoff.rho0;
        double worst = std::max(verify_uniform_continuity(tree, res.L, rho).max_violation,
                                verify_uniform_continuity(tree, res.U, rho).max_violation);
        double tight = fit_modulus_constant(tree, {res.L, res.U}, rho.p1, rho.p2);
        lines.push_back({"payoff modulus", true, worst <= 1e-12,
                         "max violation " + num(worst) + ", smallest c " + num(tight)});
        auto ix = verify_uniform_continuity(tree, res.X, cfg.index.rho_x);
        lines.push_back({"index modulus", true, ix.pass(), "max violation " + num(ix.max_violation)});
    }
    {
        Solution s = solve_robust_stopping(res);
        auto g = check_gamma_star(res);
        lines.push_back({"value certificate", true, true, "E_P*[Y] - Zhat0 = " + num(s.value - s.direct_root)});
        lines.push_back({"gamma* characterisations agree", true, g.agree, ""});
        lines.push_back({"gamma* <= tau0", true, g.below_tau0, ""});
        lines.push_back({"cascade limit frozen after tau0", true, g.frozen, ""});
    }
    auto wpr = verify_wp_sequence(tree, res.wp, res.X, res.tau0);
    lines.push_back({"wp sequence", true, wpr.pass(),
                     "strict on " + std::to_string(wpr.strict_checked) + " hitting paths; " +
                         std::to_string(wpr.unresolved_equal) + " more hold only within dt (wp_n = tau0)"});

    std::vector<StoppingTime> extras{res.tau0};
    for (int n = 1; n <= cfg.cascade.n_max; ++n) extras.push_back(res.wp.at(n));
    auto family = standard_family(tree, extras, 4, cfg.seed);
    {
        auto op = optimal_pair(tree, res.Zdirect, res.Yhat, family);
        lines.push_back({"optimal pair", true, op.family_gap <= 1e-9, "family gap " + num(op.family_gap)});
    }
    if (cfg.enabled("dpp")) {
        std::vector<StoppingTime> nus;
        for (int s = 0; s <= tree.steps(); ++s) nus.push_back(StoppingTime::constant(tree, s));
        nus.push_back(res.tau0);
        nus.push_back(approach_time(tree, res.Zdirect, res.Yhat, 0.5));
        double worst = 0;
        bool ok = true;
        for (const auto& nu : nus) {
            auto r = dpp_check(tree, res.Zdirect, res.Yhat, nu);
            ok = ok && r.pass;
            worst = std::max(worst, r.worst);
        }
        lines.push_back({"dpp", true, ok, "worst " + num(worst)});
    }
    if (cfg.enabled("martingale")) {
        auto sup = martingale_check(tree, res.Zdirect, nullptr, family);
        lines.push_back({"supermartingale", true, sup.pass, "worst " + num(sup.worst)});
        for (int n : {1, 2, 4, 8}) {
            auto nu = approach_time(tree, res.Zdirect, res.Yhat, 1.0 / n);
            auto sub = martingale_check(tree, res.Zdirect, &nu, family);
            lines.push_back({"submartingale to nu_" + std::to_string(n), true, sub.pass, "worst " + num(sub.worst)});
        }
    }
    std::vector<LedgerEntry> led;
    if (cfg.enabled("ledger")) {
        led = full_ledger(res);
        bool gating = hat.mode() == ModulusHat::Mode::Exhaustive;
        int fails = 0, slack = 0;
        for (const auto& e : led) fails += e.status == "fail", slack += e.status == "pass-with-slack";
        lines.push_back({"error ledger (" + hat.mode_name() + ")", gating, fails == 0,
                         std::to_string(led.size()) + " rows, " + std::to_string(slack) + " with grid slack, " +
                             std::to_string(fails) + " failing"});
    }
    if (cfg.enabled("oracle")) {
        try {
            auto bf = brute_force_value(tree, res.Yhat, cfg.oracle_cap);
            double diff = std::abs(bf.value - res.Zdirect[0]);
            lines.push_back({"oracle agreement", true, diff <= 1e-9,
                             "max abs diff " + num(diff) + " over " + std::to_string(bf.strategies) + " strategies"});
        } catch (const CapExceeded& e) {
            lines.push_back({"oracle agreement", false, true, std::string("skipped: ") + e.what()});
        }
    }
    if (cfg.enabled("modulus")) {
        auto grid = default_delta_grid(tree.grid());
        auto ana = ModulusHat::analytic(cfg.payoff.rho0, cfg.controls.ell, cfg.controls.d);
        auto cal = ModulusHat::calibrated(tree, cfg.payoff.rho0, grid);
        bool ok_a = true, ok_c = true;
        for (double d : grid) {
            ok_a = ok_a && verify_modulus_bound(tree, cfg.payoff.rho0, d, ana(d)).pass;
            ok_c = ok_c && verify_modulus_bound(tree, cfg.payoff.rho0, d, cal(d)).pass;
        }
        lines.push_back({"(P2) bound, analytic C_hat", true, ok_a, "C_hat = " + num(ana.c_hat())});
        lines.push_back({"(P2) bound, calibrated C_hat", true, ok_c, "C_hat = " + num(cal.c_hat())});
    }
    {
        std::string worst = "pass";
        for (int n = 1; n <= cfg.cascade.n_max; ++n) {
            auto lr = verify_lipschitz(tree, res.wp.at(n), res.wp.kappa[n - 1], LipschitzCert::Scope::Conditional);
            if (lr.summary() != "pass") worst = "n=" + std::to_string(n) + ": " + lr.summary();
        }
        lines.push_back({"wp Lipschitz", false, worst == "pass", worst});
    }

    // outputs
    fs::create_directories(out);
    json values;
    values["name"] = cfg.name;
    values["tree"] = tree.stats();
    values["rho_hat"] = {{"mode", hat.mode_name()}, {"c_hat", hat.c_hat()}};
    for (int n = 1; n <= cfg.cascade.n_max; ++n) {
        json row = json::array();
        for (int k = 1; k <= cfg.cascade.k_max; ++k) row.push_back(res.Znk[n - 1][k - 1][0]);
        values["Z_nk"].push_back(row);
    }
    for (const auto& z : res.Zn) values["Z_n"].push_back(z[0]);
    values["Z"] = res.Zlim[0];
    values["Z_hat"] = res.Zdirect[0];
    values["value"] = res.value;
    values["eps"] = json::array();
    for (double e : res.eps) values["eps"].push_back(std::isfinite(e) ? json(e) : json("inf"));
    values["k_stable"] = res.k_stable;
    write_file(out / "values.json", values.dump(2) + "\n");

    std::ostringstream lc;
    lc << "inequality,n,k,lower,upper,grid_slack,worst_slack,status\n";
    for (const auto& e : led)
        lc << e.id << ',' << e.n << ',' << e.k << ',' << num(e.lower) << ',' << num(e.upper) << ','
           << num(e.grid_slack) << ',' << num(e.worst_slack) << ',' << e.status << '\n';
    write_file(out / "ledger.csv", lc.str());

    json gs = res.gamma_star.to_json();
    gs["tau0"] = res.tau0.path_times();
    write_file(out / "gamma_star.json", gs.dump(2) + "\n");
    write_file(out / "policy.json", res.pstar.to_json().dump() + "\n");

    std::ostringstream bc;
    bc << "step,node";
    for (int q = 0; q < tree.dim(); ++q) bc << ",x" << q;
    bc << ",Z,Y,exercise\n";
    for (NodeId n = 0; n < tree.size(); ++n) {
        bc << tree.step(n) << ',' << n;
        for (int q = 0; q < tree.dim(); ++q) bc << ',' << num(tree.value(n)[q]);
        bc << ',' << num(res.Zdirect[n]) << ',' << num(res.Yhat[n]) << ','
           << (res.Zdirect[n] - res.Yhat[n] <= kMeetTol ? 1 : 0) << '\n';
    }
    write_file(out / "boundary.csv", bc.str());

    bool ok = true;
    std::ostringstream md;
    md << "# " << cfg.name << "\n\n";
    md << "- tree: " << tree.size() << " nodes, " << tree.steps() << " steps, " << tree.controls().size()
       << " controls\n";
    md << "- value: " << num(res.value) << "\n- direct envelope: " << num(res.Zdirect[0])
       << "\n- cascade limit: " << num(res.Zlim[0]) << "\n- rho_hat mode: " << hat.mode_name() << "\n\n";
    md << "| check | kind | result | detail |\n|---|---|---|---|\n";
    for (const auto& l : lines) {
        if (l.gating && !l.pass) ok = false;
        md << "| " << l.name << " | " << (l.gating ? "check" : "diagnostic") << " | "
           << (l.pass ? "pass" : "fail") << " | " << l.detail << " |\n";
        log << (l.pass ? "PASS " : (l.gating ? "FAIL " : "DIAG ")) << l.name
            << (l.detail.empty() ? "" : " -- " + l.detail) << '\n';
    }
    write_file(out / "report.md", md.str());
    return ok ? kOk : kCheckFail;
}

int print_table(const fs::path& dir, const std::string& which, std::ostream& out) {
    if (which == "ledger") {
        out << read_file(dir / "ledger.csv");
        return kOk;
    }
    if (which == "convergence") {
        json v = json::parse(read_file(dir / "values.json"));
        out << "n,k,value\n";
        int n = 1;
        for (const auto& row : v.at("Z_nk")) {
            int k = 1;
            for (const auto& x : row) out << n << ',' << k++ << ',' << num(x.get<double>()) << '\n';
            ++n;
        }
        n = 1;
        for (const auto& x : v.at("Z_n")) out << n++ << ",inf," << num(x.get<double>()) << '\n';
        out << "inf,inf," << num(v.at("Z").get<double>()) << '\n';
        out << "direct,direct," << num(v.at("Z_hat").get<double>()) << '\n';
        return kOk;
    }
    if (which == "boundary") {
        std::istringstream in(read_file(dir / "boundary.csv"));
        std::string line;
        std::getline(in, line);
        std::map<int, std::pair<int, int>> per_step;
        while (std::getline(in, line)) {
            int step = std::stoi(line.substr(0, line.find(',')));
            auto& c = per_step[step];
            ++c.first;
            c.second += line.back() == '1';
        }
        out << "step,nodes,exercise\n";
        for (auto& [s, c] : per_step) out << s << ',' << c.first << ',' << c.second << '\n';
        return kOk;
    }
    std::cerr << "unknown table '" << which << "' (convergence, ledger, boundary)\n";
    return kUsage;
}

int run_oracle(const ExperimentConfig& cfg, std::ostream& out) {
    TreeModel tree = build_tree(cfg.grid, cfg.controls, static_cast<std::size_t>(cfg.max_nodes));
    CascadeConfig cc = cfg.cascade;
    CascadeResult res = build_cascade(tree, cfg.payoff, cfg.index, make_rho_hat(cfg, tree), cc);
    auto bf = brute_force_value(tree, res.Yhat, cfg.oracle_cap);
    double diff = std::abs(bf.value - res.Zdirect[0]);
    out << "envelope " << num(res.Zdirect[0]) << "\noracle " << num(bf.value) << "\nstrategies "
        << bf.strategies << "\nmax abs diff " << num(diff) << '\n';
    out << "enumeration " << PolicyEnumeration::of(tree).to_json().dump() << '\n';
    return diff <= 1e-9 ? kOk : kCheckFail;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Robust optimal stopping on path trees"};
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "worker threads (default: ROBSTOP_WORKERS or 1)");

    std::string config, dir, which, out_dir;
    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config)->required();
    run->add_option("--out", out_dir, "results directory (default: config 'output')");
    auto* table = app.add_subcommand("table", "print a table from a results directory");
    table->add_option("dir", dir)->required();
    table->add_option("which", which, "convergence | ledger | boundary")->required();
    auto* orc = app.add_subcommand("oracle", "brute-force cross-check of a config");
    orc->add_option("config", config)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    if (workers > 0) setenv("ROBSTOP_WORKERS", std::to_string(workers).c_str(), 1);

    try {
        if (*run) {
            auto cfg = ExperimentConfig::load(config);
            return run_experiment(cfg, out_dir.empty() ? fs::path(cfg.output) : fs::path(out_dir), std::cout);
        }
        if (*table) return print_table(dir, which, std::cout);
        return run_oracle(ExperimentConfig::load(config), std::cout);
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "IoError: " << e.what() << '\n';
        return kIo;
    } catch (const json::exception& e) {
        std::cerr << "IoError: malformed results file: " << e.what() << '\n';
        return kIo;
    }
}

}  // namespace robstop
