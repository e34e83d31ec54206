#pragma once

#include <functional>
#include <string>
#include <vector>

#include "robstop/lattice.hpp"
#include "robstop/stoptimes.hpp"

namespace robstop {

struct EnvelopeField {
    Field Z;
    Field payoff;
    double bound = 0;  // max |payoff|
};

EnvelopeField snell_envelope(const TreeModel& tree, const Field& Yhat, int workers = 1);

struct ControlPolicy {
    std::vector<int> choice;  // per node; -1 on terminals

    nlohmann::json to_json() const;
};

// Argmax control of one_step_sup(., Z) at every non-terminal node.
ControlPolicy argmax_policy(const TreeModel& tree, const Field& Z);

// W(node) = E-bar_node[X_tau]: X at the stop node once tau is reached,
// otherwise the worst-case one-step expectation of W.
Field stopped_expectation(const TreeModel& tree, const Field& X, const StoppingTime& tau);
// Same under a single policy.
Field policy_expectation_field(const TreeModel& tree, const ControlPolicy& P, const Field& X,
                               const StoppingTime& tau);
double policy_expectation(const TreeModel& tree, const ControlPolicy& P, const Field& X,
                          const StoppingTime& tau);

struct CheckReport {
    std::string name;
    bool pass = true;
    double worst = 0;  // largest violation (positive = bad)
    NodeId worst_node = -1;
    long long checked = 0;

    void record(double violation, NodeId n, double tol);
    nlohmann::json to_json() const;
};

// Z = sup_{P, gamma} E[1_{gamma < nu} Yhat_gamma + 1_{gamma >= nu} Z_nu] at
// every node not yet past nu.
CheckReport dpp_check(const TreeModel& tree, const Field& Z, const Field& Yhat, const StoppingTime& nu,
                      double tol = 1e-10);

// All deterministic times, the extras, and k seeded random node rules.
std::vector<StoppingTime> standard_family(const TreeModel& tree, const std::vector<StoppingTime>& extras,
                                          int k_random, unsigned long long seed);

// Supermartingale Z_{zeta^t} >= E-bar_t[Z_zeta] for every zeta; with nu_n,
// also Z_{nu_n^zeta^t} <= E-bar_t[Z_{nu_n^zeta}].
CheckReport martingale_check(const TreeModel& tree, const Field& Z, const StoppingTime* nu_n,
                             const std::vector<StoppingTime>& family, double tol = 1e-10);

struct OptimalPair {
    StoppingTime nu_hat;
    ControlPolicy policy;
    double value = 0;
    double z0 = 0;
    double family_gap = 0;  // max |Z0 - E_P[Z_{nu_hat ^ zeta}]|
};
constexpr double kMeetTol = 1e-9;
OptimalPair optimal_pair(const TreeModel& tree, const Field& Z, const Field& Yhat,
                         const std::vector<StoppingTime>& family);

// |Z_t(w) - Z_t(w')| <= 2 rho_hat((1+kappa)||w-w'||_{0,t} + phi^w_t(kappa ||w-w'||_{0,t}) + dt)
CheckReport continuity_estimate_check(const TreeModel& tree, const Field& Z,
                                      const std::function<double(double)>& rho_hat, double kappa);

// Node list where Z - Yhat <= tol.
std::vector<NodeId> exercise_region(const TreeModel& tree, const Field& Z, const Field& Yhat,
                                    double tol = kMeetTol);

}  // namespace robstop
