#pragma once

#include <memory>
#include <string>
#include <vector>

#include "robstop/lattice.hpp"
#include "robstop/stoptimes.hpp"

namespace robstop {

// Path functional (step, path history) -> real, serialised as {kind, params}.
//
//   const{value}  time  coord{i}  norm  running_max{i}  running_min{i}
//   sup_dist{ref: [[..], ..]}   dist_arc{radius, theta0, theta1, center}
//   add/sub/mul/min/max{args: [..]}  scale{factor, arg}  neg{arg}  abs{arg}
class Expr {
public:
    Expr() = default;
    static Expr from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // path: d x (i+1) history; evaluated at its last column.
    double eval(const Eigen::MatrixXd& path, const TimeGrid& grid) const;
    // Lipschitz constant w.r.t. d_inf when derivable from the grammar, else +inf.
    double lipschitz() const;
    const std::string& kind() const { return kind_; }

    static Expr constant(double v);
    static Expr coord(int i);
    static Expr op(const std::string& kind, std::vector<Expr> args);
    static Expr scaled(double f, Expr e);

private:
    std::string kind_ = "const";
    nlohmann::json params_ = nlohmann::json::object();
    std::vector<Expr> args_;
};

Field evaluate(const TreeModel& tree, const Expr& e);

struct PayoffSpec {
    Expr L, U;
    double M0 = 1;
    Modulus rho0;
    bool terminal_from_U = false;  // patch L_T := U_T

    void validate(const TreeModel& tree) const;  // bounds and L <= U, L_T = U_T
    nlohmann::json to_json() const;
    static PayoffSpec from_json(const nlohmann::json& j);
};

struct IndexSpec {
    Expr X;
    Modulus rho_x;

    nlohmann::json to_json() const;
    static IndexSpec from_json(const nlohmann::json& j);
};

// 1 + B^2 + |B^1|: exit time of {y > -1 - |x|}.
IndexSpec eg_rm_wedge();
// 1/2 - dist(B, Gamma), Gamma the 3/4 unit circle through the origin.
IndexSpec eg_rm_arc();

struct PayoffFields {
    Field L, U;
};
PayoffFields evaluate(const TreeModel& tree, const PayoffSpec& p);

double metric_dinf(const TimeGrid& grid, int t1, const Eigen::MatrixXd& w1, int t2,
                   const Eigen::MatrixXd& w2);
double path_modulus(const TimeGrid& grid, const Eigen::MatrixXd& w, int t, double x);

StoppingTime tau0(const TreeModel& tree, const Field& X);
double tau_n_level(double X0, int n);
StoppingTime tau_n(const TreeModel& tree, const Field& X, int n);

// Value of a field at real step s, read at the grid point floor(s) on the
// path through node n (s is clipped to step(n)).
double at_floor(const TreeModel& tree, const Field& F, NodeId n, double s);

Field script_Y(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& tau0);
// 𝒴 stopped at tau0.
Field script_Y_stopped(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& tau0);
double blend_weight(double dt, int since, int k);
Field Y_nk(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp, int k);
Field hat_Y_nk(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp, int k);
Field script_Y_n(const TreeModel& tree, const Field& L, const Field& U, const StoppingTime& wp);

struct ContinuityReport {
    double max_violation = 0;
    NodeId worst_a = -1, worst_b = -1;
    long long pairs = 0;
    bool exhaustive = true;
    bool pass() const { return max_violation <= 1e-12; }
    nlohmann::json to_json() const;
};
// |X(n1) - X(n2)| <= rho(d_inf) over node pairs (all pairs when the tree has
// at most `budget` nodes' worth of pairs, otherwise `budget` seeded samples).
ContinuityReport verify_uniform_continuity(const TreeModel& tree, const Field& X, const Modulus& rho,
                                           long long budget = 4'000'000, unsigned long long seed = 1);

// Smallest c such that c (x^p1 v x^p2) passes verify_uniform_continuity.
double fit_modulus_constant(const TreeModel& tree, const std::vector<Field>& fields, double p1, double p2);

}  // namespace robstop
