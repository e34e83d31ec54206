#include "robstop/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robstop/errors.hpp"

namespace robstop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// U(s ^ t) on the path through n, s = wp + offset steps; U(t) while wp is ahead.
double u_after(const CascadeResult& r, const StoppingTime& wp, NodeId n, double offset) {
    if (!wp.reached(n)) return r.U[n];
    return at_floor(*r.tree, r.U, n, wp.time_at(n) + offset);
}

template <class F>
LedgerEntry ledger(const CascadeResult& r, std::string id, int n, int k, double lower, double upper, F&& expr) {
    LedgerEntry e;
    e.id = std::move(id);
    e.n = n;
    e.k = k;
    e.lower = lower;
    e.upper = upper;
    e.grid_slack = r.rho_hat(r.tree->grid().dt());
    e.worst_slack = -kInf;
    for (NodeId node = 0; node < r.tree->size(); ++node) {
        double v = expr(node);
        double s = std::max(v - upper, lower - v);
        if (s > e.worst_slack) e.worst_slack = s, e.worst_node = node;
    }
    if (!std::isfinite(upper) || !std::isfinite(lower)) e.status = "vacuous";
    else if (e.worst_slack <= 1e-12) e.status = "pass";
    else if (e.worst_slack <= e.grid_slack + 1e-12) e.status = "pass-with-slack";
    else e.status = "fail";
    return e;
}

double tail_exponent(const ModulusHat& h) {
    return h.mode() == ModulusHat::Mode::Exhaustive ? h.rho().p1 : h.p_hat1();
}

double tail_constant(const ModulusHat& h) {
    return h.mode() == ModulusHat::Mode::Exhaustive ? h.rho().c : h.c_hat();
}

}  // namespace

nlohmann::json LedgerEntry::to_json() const {
    return {{"id", id},       {"n", n},         {"k", k},
            {"lower", lower}, {"upper", upper}, {"grid_slack", grid_slack},
            {"worst_slack", worst_slack}, {"worst_node", worst_node}, {"status", status}};
}

double epsilon_n(const ModulusHat& h, const TimeGrid& grid, int n, int n_max) {
    const double T = grid.T;
    const double p = tail_exponent(h);
    if (p <= 1) return kInf;
    // past I every term sits on the small-delta branch c x^p (x < min(dt, 1))
    int I = std::max(10 * n_max, n);
    while (2 * T / (I + 4) >= std::min(grid.dt(), 1.0)) ++I;
    double sum = 0;
    for (int i = n; i <= I; ++i) sum += h(2 * T / (i + 3));
    return sum + tail_constant(h) * std::pow(2 * T, p) * std::pow(I + 3.0, 1 - p) / (p - 1);
}

CascadeResult build_cascade(const TreeModel& tree, const PayoffSpec& payoff, const IndexSpec& index,
                            const ModulusHat& rho_hat0, const CascadeConfig& cfg) {
    if (cfg.n_max < 1 || cfg.k_max < 1) throw ConfigError("n_max and k_max must be >= 1");
    payoff.validate(tree);
    CascadeResult r;
    r.tree = &tree;
    r.rho_hat0 = rho_hat0;
    r.cfg = cfg;
    auto f = evaluate(tree, payoff);
    r.L = f.L;
    r.U = f.U;
    r.X = evaluate(tree, index.X);
    if (!(r.X[0] > 0)) throw ConfigError("index must be positive at the root");
    r.tau0 = tau0(tree, r.X);
    r.Y = script_Y(tree, r.L, r.U, r.tau0);
    r.Yhat = script_Y_stopped(tree, r.L, r.U, r.tau0);
    r.wp = build_wp_sequence(tree, r.X, index.rho_x, cfg.n_max + 1);

    r.Znk.resize(cfg.n_max);
    for (int n = 1; n <= cfg.n_max; ++n)
        for (int k = 1; k <= cfg.k_max; ++k)
            r.Znk[n - 1].push_back(snell_envelope(tree, hat_Y_nk(tree, r.L, r.U, r.wp.at(n), k), cfg.workers).Z);
    for (int n = 1; n <= cfg.n_max + 1; ++n)
        r.Zn.push_back(snell_envelope(tree, script_Y_n(tree, r.L, r.U, r.wp.at(n)), cfg.workers).Z);
    // the wp_n reach tau0 on a finite tree, so the limit payoff is 𝒴^n with wp = tau0
    r.Zlim = snell_envelope(tree, script_Y_n(tree, r.L, r.U, r.tau0), cfg.workers).Z;
    r.Zdirect = snell_envelope(tree, r.Yhat, cfg.workers).Z;

    for (int n = 1; n <= cfg.n_max + 1; ++n) r.eps.push_back(epsilon_n(rho_hat0, tree.grid(), n, cfg.n_max));
    for (int k = 1; k <= cfg.k_max; ++k) r.k_stable.push_back(std::ldexp(1.0, 1 - k) < tree.grid().dt());

    r.gamma_star = approach_time(tree, r.Zdirect, r.Yhat, kMeetTol);
    r.pstar = argmax_policy(tree, r.Zdirect);
    r.value = policy_expectation(tree, r.pstar, r.Y, stop_compose(r.gamma_star, r.tau0, ComposeOp::Min));
    return r;
}

LedgerEntry check_eh137(const CascadeResult& r, int n, int k) {
    const double w = std::ldexp(1.0, 1 - k);
    const double rh = r.rho_hat(w);
    const auto& wp = r.wp.at(n);
    const auto& Z = r.Znk.at(n - 1).at(k - 1);
    const auto& Zn = r.Zn.at(n - 1);
    const double off = w / r.tree->grid().dt();
    return ledger(r, "eh137", n, k, -2 * rh, rh, [&](NodeId v) {
        return Z[v] - Zn[v] - u_after(r, wp, v, off) + u_after(r, wp, v, 0);
    });
}

LedgerEntry check_eh137b(const CascadeResult& r, int n) {
    const double rh = r.rho_hat(2 * r.tree->grid().T / (n + 3));
    const auto &a = r.wp.at(n), &b = r.wp.at(n + 1);
    const auto &Za = r.Zn.at(n - 1), &Zb = r.Zn.at(n);
    return ledger(r, "eh137b", n, 0, -2 * rh, rh, [&](NodeId v) {
        return Zb[v] - Za[v] - u_after(r, b, v, 0) + u_after(r, a, v, 0);
    });
}

LedgerEntry check_et317(const CascadeResult& r, int n) {
    const double e = r.eps.at(n - 1);
    const auto& wp = r.wp.at(n);
    const auto& Zn = r.Zn.at(n - 1);
    return ledger(r, "et317", n, 0, -2 * e, e, [&](NodeId v) {
        return r.Zlim[v] - Zn[v] - u_after(r, r.tau0, v, 0) + u_after(r, wp, v, 0);
    });
}

LedgerEntry check_et341(const CascadeResult& r, int k) {
    const double w = std::ldexp(1.0, 1 - k);
    const double bar = 2 * r.rho_hat(w) + 2 * r.eps.at(k - 1);
    const auto& wp = r.wp.at(k);
    const auto& Z = r.Znk.at(k - 1).at(k - 1);
    const double off = w / r.tree->grid().dt();
    return ledger(r, "et341", k, k, -bar, bar, [&](NodeId v) {
        return Z[v] - r.Zlim[v] - u_after(r, wp, v, off) + u_after(r, r.tau0, v, 0);
    });
}

LedgerEntry check_root(const CascadeResult& r, int n, int k) {
    const double rh = r.rho_hat(std::ldexp(1.0, 1 - k));
    const double e = r.eps.at(n - 1);
    LedgerEntry out = ledger(r, "root", n, k, -2 * e - rh, e + 2 * rh, [&](NodeId) {
        return r.Zdirect[0] - r.Znk.at(n - 1).at(k - 1)[0];
    });
    out.worst_node = 0;
    return out;
}

std::vector<LedgerEntry> full_ledger(const CascadeResult& r) {
    std::vector<LedgerEntry> out;
    const int nm = r.cfg.n_max, km = r.cfg.k_max;
    for (int n = 1; n <= nm; ++n)
        for (int k = 1; k <= km; ++k) out.push_back(check_eh137(r, n, k));
    for (int n = 1; n <= nm; ++n) out.push_back(check_eh137b(r, n));
    for (int n = 1; n <= nm; ++n) out.push_back(check_et317(r, n));
    for (int k = 1; k <= std::min(nm, km); ++k) out.push_back(check_et341(r, k));
    out.push_back(check_root(r, nm, km));
    return out;
}

nlohmann::json GammaReport::to_json() const {
    return {{"agree", agree}, {"below_tau0", below_tau0}, {"frozen", frozen}};
}

GammaReport check_gamma_star(const CascadeResult& r) {
    const auto& tree = *r.tree;
    GammaReport g;
    StoppingTime a = approach_time(tree, r.Zlim, r.Yhat, kMeetTol);
    StoppingTime meet_L = approach_time(tree, r.Zlim, r.L, kMeetTol);
    StoppingTime c = stop_compose(meet_L, r.tau0, ComposeOp::Min);
    g.agree = a == r.gamma_star && c == r.gamma_star;
    for (int j = 0; j < tree.leaves(); ++j)
        if (r.gamma_star.at_leaf(j) > r.tau0.at_leaf(j)) g.below_tau0 = false;
    for (NodeId n = 0; n < tree.size(); ++n)
        if (r.tau0.reached(n) && r.Zlim[n] != r.U[r.tau0.stop_node(n)]) g.frozen = false;
    return g;
}

Solution solve_robust_stopping(const CascadeResult& r) {
    Solution s{r.value, r.Zdirect[0], r.Zlim[0], r.gamma_star, r.pstar, {}};
    const double gap = std::abs(s.value - s.direct_root);
    if (gap > 1e-9)
        throw OptimalityGap("E_P*[Y_gamma*] = " + std::to_string(s.value) + " vs envelope " +
                            std::to_string(s.direct_root));
    auto g = check_gamma_star(r);
    s.certificate = {{"value", s.value},
                     {"direct_root", s.direct_root},
                     {"cascade_root", s.cascade_root},
                     {"value_gap", gap},
                     {"direct_le_cascade", s.direct_root <= s.cascade_root + 1e-12},
                     {"gamma_star", g.to_json()}};
    return s;
}

Solution solve_robust_stopping(const TreeModel& tree, const PayoffSpec& payoff, const IndexSpec& index,
                               const ModulusHat& rho_hat0, const CascadeConfig& cfg) {
    return solve_robust_stopping(build_cascade(tree, payoff, index, rho_hat0, cfg));
}

}  // namespace robstop
