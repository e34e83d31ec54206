#pragma once

#include <string>
#include <vector>

#include "robstop/lattice.hpp"
#include "robstop/processes.hpp"
#include "robstop/snell.hpp"
#include "robstop/stoptimes.hpp"

namespace robstop {

struct CascadeConfig {
    int n_max = 4;
    int k_max = 4;
    int workers = 1;
};

struct LedgerEntry {
    std::string id;  // eh137, eh137b, et317, et341, root
    int n = 0, k = 0;
    double lower = 0, upper = 0;  // bounds on the displayed expression
    double grid_slack = 0;        // rho_hat_0(dt)
    double worst_slack = 0;       // max(expr - upper, lower - expr) over nodes
    NodeId worst_node = -1;
    std::string status;           // pass, pass-with-slack, fail, vacuous

    bool ok() const { return status != "fail"; }
    nlohmann::json to_json() const;
};

struct CascadeResult {
    const TreeModel* tree = nullptr;
    ModulusHat rho_hat0;
    CascadeConfig cfg;
    Field L, U, X;
    Field Y;        // 𝒴
    Field Yhat;     // 𝒴 stopped at tau0
    StoppingTime tau0;
    WpSequence wp;  // n = 1 .. n_max + 1
    std::vector<std::vector<Field>> Znk;  // [n-1][k-1]
    std::vector<Field> Zn;                // 𝒵^n, n = 1 .. n_max + 1
    Field Zlim;                           // 𝒵
    Field Zdirect;                        // envelope of Yhat
    std::vector<double> eps;              // eps_n, n = 1 .. n_max + 1 (index n-1)
    std::vector<bool> k_stable;           // 2^{1-k} < dt
    StoppingTime gamma_star;
    ControlPolicy pstar;
    double value = 0;

    double rho_hat(double delta) const { return rho_hat0(delta); }
};

// sum_{i >= n} rho_hat(2T/(i+3)) with an integral tail bound; +inf if divergent.
double epsilon_n(const ModulusHat& rho_hat, const TimeGrid& grid, int n, int n_max);

CascadeResult build_cascade(const TreeModel& tree, const PayoffSpec& payoff, const IndexSpec& index,
                            const ModulusHat& rho_hat0, const CascadeConfig& cfg);

LedgerEntry check_eh137(const CascadeResult& r, int n, int k);
LedgerEntry check_eh137b(const CascadeResult& r, int n);
LedgerEntry check_et317(const CascadeResult& r, int n);
LedgerEntry check_et341(const CascadeResult& r, int k);
// Root consistency of the direct envelope against Z^{n,k}.
LedgerEntry check_root(const CascadeResult& r, int n, int k);
std::vector<LedgerEntry> full_ledger(const CascadeResult& r);

struct GammaReport {
    bool agree = true;         // the three characterisations coincide
    bool below_tau0 = true;    // gamma* <= tau0 on every path
    bool frozen = true;        // 𝒵 = U(tau0) after tau0, exactly
    nlohmann::json to_json() const;
};
GammaReport check_gamma_star(const CascadeResult& r);

struct Solution {
    double value = 0;           // E_{P*}[𝒴_{gamma* ^ tau0}]
    double direct_root = 0;     // Ẑ(root)
    double cascade_root = 0;    // 𝒵(root)
    StoppingTime gamma_star;
    ControlPolicy pstar;
    nlohmann::json certificate;
};
Solution solve_robust_stopping(const CascadeResult& r);
Solution solve_robust_stopping(const TreeModel& tree, const PayoffSpec& payoff, const IndexSpec& index,
                               const ModulusHat& rho_hat0, const CascadeConfig& cfg);

}  // namespace robstop
