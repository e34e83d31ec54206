#include "doctest.h"
#include "robstop/cascade.hpp"
#include "robstop/errors.hpp"
#include "robstop/oracle.hpp"
#include "support.hpp"

using namespace robstop;
using namespace testing_support;

namespace {

IndexSpec flat_index() {
    IndexSpec ix;
    ix.X = Expr::constant(1);
    ix.rho_x = Modulus{1, 1, 1};
    return ix;
}

PayoffSpec same(const std::string& L_json, double M0 = 10) {
    PayoffSpec p;
    p.L = p.U = Expr::from_json(expr(L_json));
    p.M0 = M0;
    p.rho0 = Modulus{std::max(p.L.lipschitz(), 1e-12), 1, 1};
    return p;
}

}  // namespace

TEST_CASE("epsilon_n: series with integral tail") {
    TimeGrid g{1, 4};
    Modulus sq{0.5, 2, 2};
    auto h = ModulusHat::analytic(sq, 1, 1);
    CHECK(std::isinf(epsilon_n(ModulusHat::analytic(Modulus{1, 1, 1}, 1, 1), g, 1, 4)));
    // p1 / 2 = 1 on the analytic branch: still divergent
    CHECK(std::isinf(epsilon_n(h, g, 1, 4)));
    auto h3 = ModulusHat::analytic(Modulus{0.5, 3, 3}, 1, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 6; ++n) {
        double e = epsilon_n(h3, g, n, 6);
        // brute partial sum far past the truncation point
        const int M = 2'000'000;
        double direct = 0;
        for (int i = n; i < M; ++i) direct += h3(2 * g.T / (i + 3));
        // what is left lies between the integrals of C (2T / x)^1.5 from M + 3 and from M + 2
        double rest_lo = h3(2 * g.T / (M + 3)) * (M + 3) / 0.5;
        double rest_hi = h3(2 * g.T / (M + 2)) * (M + 2) / 0.5;
        CHECK(e >= direct + rest_lo);
        // the closed-form tail starts early, so it is an upper bound with a little room
        CHECK(e <= (direct + rest_hi) * (1 + 2e-3));
        CHECK(e < prev);
        prev = e;
    }
}

TEST_CASE("cascade with L = U collapses onto the plain envelope") {
    auto t = tree1(1, 3, {{0.2, 0.9}, {-0.3, 1.1}});
    auto p = same(R"({"kind":"abs","params":{"arg":{"kind":"coord"}}})");
    auto ix = line_index(0.7, 1.5);
    auto r = build_cascade(t, p, ix, ModulusHat::exhaustive(t, p.rho0), CascadeConfig{3, 3, 1});
    // no jump: every blended payoff is L itself, and the limit is L stopped at tau0
    for (int n = 1; n <= 3; ++n) {
        for (int k = 1; k <= 3; ++k) CHECK(Y_nk(t, r.L, r.U, r.wp.at(n), k) == r.L);
        CHECK(r.Zn[n - 1] == snell_envelope(t, script_Y_n(t, r.L, r.L, r.wp.at(n))).Z);
    }
    Field plainL = snell_envelope(t, script_Y_stopped(t, r.L, r.L, r.tau0)).Z;
    CHECK(r.Zlim == plainL);
    CHECK(r.Zdirect == plainL);
    for (const auto& e : full_ledger(r)) CHECK_MESSAGE(e.ok(), e.id, " n=", e.n, " k=", e.k);
    auto nu = approach_time(t, r.Zdirect, r.Yhat, kMeetTol);
    CHECK(r.gamma_star == nu);
}

TEST_CASE("cascade with a flat index is the envelope of L") {
    auto t = tree1(1, 3, {{0.2, 0.9}, {-0.3, 1.1}});
    auto p = spread_payoff(1, 0.4, R"({"kind":"coord"})");
    auto r = build_cascade(t, p, flat_index(), ModulusHat::analytic(p.rho0, 1, 1), CascadeConfig{2, 2, 1});
    CHECK(r.tau0 == StoppingTime::constant(t, 3));
    Field envL = snell_envelope(t, r.L).Z;
    CHECK(r.Zlim == envL);
    CHECK(r.Zdirect == envL);
    CHECK(r.value == doctest::Approx(envL[0]).epsilon(1e-12));
    // wp_n = T, so eh137b compares equal fields
    for (int n = 1; n <= 2; ++n) CHECK(check_eh137b(r, n).worst_slack <= 0);
}

TEST_CASE("value against the oracle on 3-step two-control trees") {
    for (unsigned seed = 1; seed <= 8; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ub(-0.8, 0.8), us(0.3, 1.3);
        auto t = tree1(1, 3, {{ub(rng), us(rng)}, {ub(rng), us(rng)}});
        auto p = spread_payoff(1, 0.6, R"({"kind":"min","params":{"args":[
            {"kind":"abs","params":{"arg":{"kind":"coord"}}},{"kind":"const","params":{"value":2}}]}})");
        auto ix = line_index(0.5, 1);
        auto r = build_cascade(t, p, ix, ModulusHat::analytic(p.rho0, 1, 1), CascadeConfig{2, 2, 1});
        auto bf = brute_force_value(t, r.Yhat);
        CHECK(r.value == doctest::Approx(bf.value).epsilon(1e-12));
        auto s = solve_robust_stopping(r);
        CHECK(s.value == doctest::Approx(s.direct_root).epsilon(1e-12));
        CHECK(s.certificate["gamma_star"]["agree"] == true);
        auto g = check_gamma_star(r);
        CHECK(g.below_tau0);
        CHECK(g.frozen);
        CHECK(g.agree);
    }
}

TEST_CASE("solve: constant payoff and waiting for the barrier") {
    auto t = tree1(1, 3, {{0.2, 0.9}, {-0.3, 1.1}});
    auto c = solve_robust_stopping(t, same(R"({"kind":"const","params":{"value":1.25}})"), line_index(0.4, 1),
                                   ModulusHat::analytic(Modulus{1e-12, 1, 1}, 1, 1), CascadeConfig{1, 1, 1});
    CHECK(c.value == 1.25);
    CHECK(c.gamma_star == StoppingTime::constant(t, 0));

    PayoffSpec p;
    p.L = Expr::constant(0);
    p.U = Expr::constant(1);
    p.M0 = 1;
    p.rho0 = Modulus{1e-12, 1, 1};
    p.terminal_from_U = true;
    auto s = solve_robust_stopping(t, p, line_index(0.4, 1), ModulusHat::analytic(p.rho0, 1, 1), CascadeConfig{2, 2, 1});
    CHECK(s.value == doctest::Approx(1).epsilon(1e-15));
    // every strategy that stops before tau0 and T collects less than one
    auto r = build_cascade(t, p, line_index(0.4, 1), ModulusHat::analytic(p.rho0, 1, 1), CascadeConfig{2, 2, 1});
    CHECK(brute_force_value(t, r.Yhat).value == doctest::Approx(1));
    for (int j = 0; j < t.leaves(); ++j) CHECK(s.gamma_star.at_leaf(j) == r.tau0.at_leaf(j));
}

TEST_CASE("error ledger with the exhaustive modulus on tiny trees") {
    int rows = 0;
    for (unsigned seed = 1; seed <= 12; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ub(-0.8, 0.8), us(0.3, 1.3);
        int N = 2 + static_cast<int>(seed % 2);
        auto t = tree1(1, N, {{ub(rng), us(rng)}, {ub(rng), us(rng)}});
        auto p = fitted(t, spread_payoff(1, 0.8, R"({"kind":"sub","params":{"args":[
            {"kind":"running_max","params":{"i":0}},{"kind":"scale","params":{"factor":0.5,"arg":{"kind":"coord"}}}]}})"),
                        2);
        auto r = build_cascade(t, p, line_index(0.45, 1.2), ModulusHat::exhaustive(t, p.rho0), CascadeConfig{3, 3, 1});
        for (const auto& e : full_ledger(r)) {
            if (e.id == "et341") continue;  // reported separately as a diagnostic
            CHECK_MESSAGE(e.ok(), e.id, " n=", e.n, " k=", e.k, " slack=", e.worst_slack);
            CHECK(e.status != "vacuous");
            ++rows;
        }
    }
    CHECK(rows > 100);
}

TEST_CASE("ledger entries flag a broken cascade") {
    auto t = tree1(1, 3, {{0.2, 0.9}, {-0.3, 1.1}});
    auto p = fitted(t, spread_payoff(1, 0.8, R"({"kind":"coord"})"), 2);
    auto r = build_cascade(t, p, line_index(0.45, 1.2), ModulusHat::exhaustive(t, p.rho0), CascadeConfig{2, 2, 1});
    r.Zn[0] = r.Zn[0].array() + 1e4;  // far past any of the bounds
    CHECK(check_eh137(r, 1, 1).status == "fail");
    CHECK(check_eh137b(r, 1).status == "fail");
    CHECK(check_et317(r, 1).status == "fail");
    CHECK_THROWS_AS(build_cascade(t, p, line_index(0.45, 1.2), ModulusHat::exhaustive(t, p.rho0), CascadeConfig{0, 2, 1}),
                    ConfigError);
    CHECK_THROWS_AS(build_cascade(t, p, line_index(-0.1, 1), ModulusHat::exhaustive(t, p.rho0), CascadeConfig{1, 1, 1}),
                    ConfigError);
}
