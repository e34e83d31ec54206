#pragma once

// Seeded instance generators shared by the unit tests and the acceptance run.

#include <cmath>
#include <random>

#include "robstop/cascade.hpp"
#include "robstop/lattice.hpp"
#include "robstop/processes.hpp"

namespace testing_support {

using namespace robstop;

inline Control ctl(double b, double s) {
    Control c;
    c.b = Eigen::VectorXd::Constant(1, b);
    c.sigma = Eigen::VectorXd::Constant(1, s);
    return c;
}

inline ControlSet controls1(std::vector<std::pair<double, double>> bs, double ell = 1.0) {
    ControlSet cs;
    cs.d = 1;
    cs.ell = ell;
    for (auto [b, s] : bs) cs.controls.push_back(ctl(b, s));
    return cs;
}

inline TreeModel tree1(double T, int N, std::vector<std::pair<double, double>> bs, double ell = 1.0) {
    return build_tree(TimeGrid{T, N}, controls1(std::move(bs), ell));
}

struct Instance {
    TreeModel tree;
    Field Y;
};

// d = 1, N <= 4, |C| <= 3 (|C| <= 2 when N = 4 to keep the oracle cheap).
inline TreeModel random_tree(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nd(1, 4);
    int N = nd(rng);
    int C = std::uniform_int_distribution<int>(1, N == 4 ? 2 : 3)(rng);
    std::uniform_real_distribution<double> ub(-1, 1), us(0.2, std::sqrt(2.0));
    std::vector<std::pair<double, double>> bs;
    for (int c = 0; c < C; ++c) bs.emplace_back(ub(rng), us(rng));
    double T = std::uniform_real_distribution<double>(0.5, 2)(rng);
    return tree1(T, N, bs);
}

inline Field random_field(const TreeModel& tree, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Field f(tree.size());
    for (auto& x : f) x = u(rng);
    return f;
}

inline Instance random_instance(unsigned long long seed) {
    std::mt19937_64 rng(seed);
    TreeModel t = random_tree(rng);
    Field y = random_field(t, rng);
    return {std::move(t), std::move(y)};
}

inline nlohmann::json expr(const std::string& s) { return nlohmann::json::parse(s); }

// L = clipped path payoff, U = L + a (T - t) so L <= U and L_T = U_T.
inline PayoffSpec spread_payoff(double T, double a, const std::string& L_json) {
    PayoffSpec p;
    p.L = Expr::from_json(expr(L_json));
    Expr time = Expr::from_json({{"kind", "time"}});
    p.U = Expr::op("add", {p.L, Expr::scaled(a, Expr::op("sub", {Expr::constant(T), time}))});
    p.M0 = 10;
    p.rho0 = Modulus{std::max(p.L.lipschitz(), p.U.lipschitz()), 1, 1};
    return p;
}

// Index 𝒳 = x0 + s * B: hits zero when B <= -x0 / s (s > 0).
inline IndexSpec line_index(double x0, double s) {
    IndexSpec ix;
    ix.X = Expr::op("add", {Expr::constant(x0), Expr::scaled(s, Expr::coord(0))});
    ix.rho_x = Modulus{s, 1, 1};
    return ix;
}

// Payoff modulus fitted on the tree with exponent p (so eps_n is finite for p > 1).
inline PayoffSpec fitted(const TreeModel& tree, PayoffSpec p, double expo) {
    auto f = evaluate(tree, p);
    double c = fit_modulus_constant(tree, {f.L, f.U}, expo, expo);
    p.rho0 = Modulus{std::max(c, 1e-12), expo, expo};
    return p;
}

}  // namespace testing_support
