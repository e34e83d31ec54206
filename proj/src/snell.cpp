#include "robstop/snell.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "robstop/errors.hpp"
#include "robstop/parallel.hpp"
#include "robstop/processes.hpp"

namespace robstop {

EnvelopeField snell_envelope(const TreeModel& tree, const Field& Yhat, int workers) {
    EnvelopeField e;
    e.payoff = Yhat;
    e.bound = Yhat.cwiseAbs().maxCoeff();
    e.Z = Yhat;
    for (int i = tree.steps() - 1; i >= 0; --i)
        parallel_for(tree.level_begin(i), tree.level_end(i), workers, [&](long n) {
            e.Z[n] = std::max(Yhat[n], one_step_sup(tree, static_cast<NodeId>(n), e.Z));
        });
    return e;
}

nlohmann::json ControlPolicy::to_json() const { return {{"choice", choice}}; }

ControlPolicy argmax_policy(const TreeModel& tree, const Field& Z) {
    ControlPolicy P;
    P.choice.assign(tree.size(), -1);
    for (NodeId n = 0; n < tree.level_begin(tree.steps()); ++n) P.choice[n] = one_step_argmax(tree, n, Z).second;
    return P;
}

Field stopped_expectation(const TreeModel& tree, const Field& X, const StoppingTime& tau) {
    Field W(tree.size());
    for (int i = tree.steps(); i >= 0; --i)
        for (NodeId n = tree.level_begin(i); n < tree.level_end(i); ++n)
            W[n] = tau.reached(n) ? X[tau.stop_node(n)] : one_step_sup(tree, n, W);
    return W;
}

Field policy_expectation_field(const TreeModel& tree, const ControlPolicy& P, const Field& X,
                               const StoppingTime& tau) {
    Field W(tree.size());
    for (int i = tree.steps(); i >= 0; --i)
        for (NodeId n = tree.level_begin(i); n < tree.level_end(i); ++n) {
            if (tau.reached(n)) {
                W[n] = X[tau.stop_node(n)];
            } else {
                int c = P.choice[n];
                W[n] = 0.5 * (W[tree.up(n, c)] + W[tree.down(n, c)]);
            }
        }
    return W;
}

double policy_expectation(const TreeModel& tree, const ControlPolicy& P, const Field& X,
                          const StoppingTime& tau) {
    return policy_expectation_field(tree, P, X, tau)[0];
}

void CheckReport::record(double violation, NodeId n, double tol) {
    ++checked;
    if (violation > worst) worst = violation, worst_node = n;
    if (violation > tol) pass = false;
}

nlohmann::json CheckReport::to_json() const {
    return {{"name", name}, {"pass", pass}, {"worst", worst}, {"worst_node", worst_node}, {"checked", checked}};
}

CheckReport dpp_check(const TreeModel& tree, const Field& Z, const Field& Yhat, const StoppingTime& nu,
                      double tol) {
    CheckReport r;
    r.name = "dpp";
    Field W(tree.size());
    for (int i = tree.steps(); i >= 0; --i)
        for (NodeId n = tree.level_begin(i); n < tree.level_end(i); ++n) {
            if (nu.reached(n)) {
                W[n] = Z[nu.stop_node(n)];
                if (!nu.stops_at(n)) continue;  // nu already in the past
            } else {
                W[n] = std::max(Yhat[n], one_step_sup(tree, n, W));
            }
            r.record(std::abs(W[n] - Z[n]), n, tol);
        }
    return r;
}

std::vector<StoppingTime> standard_family(const TreeModel& tree, const std::vector<StoppingTime>& extras,
                                          int k_random, unsigned long long seed) {
    std::vector<StoppingTime> fam;
    for (int s = 0; s <= tree.steps(); ++s) fam.push_back(StoppingTime::constant(tree, s));
    fam.insert(fam.end(), extras.begin(), extras.end());
    std::mt19937_64 rng(seed);
    for (int r = 0; r < k_random; ++r) {
        std::vector<unsigned char> stop(tree.size());
        for (auto& b : stop) b = (rng() >> 11) % 3 == 0;
        fam.push_back(StoppingTime::from_decisions(tree, stop));
    }
    return fam;
}

CheckReport martingale_check(const TreeModel& tree, const Field& Z, const StoppingTime* nu_n,
                             const std::vector<StoppingTime>& family, double tol) {
    CheckReport r;
    r.name = nu_n ? "submartingale" : "supermartingale";
    for (const auto& zeta : family) {
        // super: Z_{zeta ^ t} >= E_t[Z_zeta]
        Field W = stopped_expectation(tree, Z, zeta);
        for (NodeId n = 0; n < tree.size(); ++n) {
            double lhs = zeta.reached(n) ? Z[zeta.stop_node(n)] : Z[n];
            r.record(W[n] - lhs, n, tol);
        }
        if (!nu_n) continue;
        StoppingTime g = stop_compose(*nu_n, zeta, ComposeOp::Min);
        Field V = stopped_expectation(tree, Z, g);
        for (NodeId n = 0; n < tree.size(); ++n) {
            double lhs = g.reached(n) ? Z[g.stop_node(n)] : Z[n];
            r.record(lhs - V[n], n, tol);
        }
    }
    return r;
}

OptimalPair optimal_pair(const TreeModel& tree, const Field& Z, const Field& Yhat,
                         const std::vector<StoppingTime>& family) {
    OptimalPair op{approach_time(tree, Z, Yhat, kMeetTol), argmax_policy(tree, Z)};
    op.z0 = Z[0];
    op.value = policy_expectation(tree, op.policy, Yhat, op.nu_hat);
    if (std::abs(op.z0 - op.value) > 1e-9)
        throw OptimalityGap("Z0 = " + std::to_string(op.z0) + " but E_P[Y_nu] = " + std::to_string(op.value));
    for (const auto& zeta : family) {
        double v = policy_expectation(tree, op.policy, Z, stop_compose(op.nu_hat, zeta, ComposeOp::Min));
        op.family_gap = std::max(op.family_gap, std::abs(op.z0 - v));
    }
    return op;
}

CheckReport continuity_estimate_check(const TreeModel& tree, const Field& Z,
                                      const std::function<double(double)>& rho_hat, double kappa) {
    CheckReport r;
    r.name = "continuity";
    const double dt = tree.grid().dt();
    for (int i = 0; i <= tree.steps(); ++i)
        for (NodeId a = tree.level_begin(i); a < tree.level_end(i); ++a) {
            Eigen::MatrixXd pa = tree.path(a);
            for (NodeId b = tree.level_begin(i); b < tree.level_end(i); ++b) {
                if (a == b) continue;
                double dist = running_distance(pa, tree.path(b))[i];
                double arg = (1 + kappa) * dist + path_modulus(tree.grid(), pa, i, kappa * dist) + dt;
                r.record(std::abs(Z[a] - Z[b]) - 2 * rho_hat(arg), a, 1e-12);
            }
        }
    return r;
}

std::vector<NodeId> exercise_region(const TreeModel& tree, const Field& Z, const Field& Yhat, double tol) {
    std::vector<NodeId> out;
    for (NodeId n = 0; n < tree.size(); ++n)
        if (Z[n] - Yhat[n] <= tol) out.push_back(n);
    return out;
}

}  // namespace robstop
