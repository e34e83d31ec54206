#include "doctest.h"
#include "robstop/errors.hpp"
#include "robstop/oracle.hpp"
#include "support.hpp"

#include <algorithm>
#include <random>

using namespace robstop;
using namespace testing_support;

TEST_CASE("build_tree: one step, one control") {
    auto t = tree1(1, 1, {{0, 1}});
    CHECK(t.size() == 3);
    CHECK(t.value(1)[0] == doctest::Approx(1));
    CHECK(t.value(2)[0] == doctest::Approx(-1));
    CHECK(t.value(0)[0] == 0);
}

TEST_CASE("build_tree: binary depth two keeps both orders") {
    auto t = tree1(2, 2, {{0, 1}});  // dt = 1
    CHECK(t.size() == 7);
    // +1-1 and -1+1 are distinct nodes with the same value
    CHECK(t.value(4)[0] == doctest::Approx(0));
    CHECK(t.value(5)[0] == doctest::Approx(0));
    CHECK(t.path(4)(0, 1) == doctest::Approx(1));
    CHECK(t.path(5)(0, 1) == doctest::Approx(-1));
}

TEST_CASE("build_tree: two drifts give four children") {
    auto t = tree1(1, 1, {{0.5, 1}, {-0.5, 1}});
    REQUIRE(t.branching() == 4);
    std::vector<double> got;
    for (int j = 0; j < 4; ++j) got.push_back(t.value(t.child(0, j))[0]);
    // hand enumeration of b dt +- sigma sqrt(dt)
    std::vector<double> want{1.5, -0.5, 0.5, -1.5};
    for (int j = 0; j < 4; ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-15));
}

TEST_CASE("build_tree: shared increments are deduplicated") {
    auto t = tree1(1, 3, {{0, 1}, {0, 1}});
    CHECK(t.branching() == 2);
    CHECK(t.size() == 15);
    CHECK(t.up(0, 1) == t.up(0, 0));
}

TEST_CASE("build_tree: errors") {
    CHECK_THROWS_AS(tree1(1, 2, {{2, 1}}), BadControl);          // |b| > ell
    CHECK_THROWS_AS(tree1(1, 2, {{0, 2}}), BadControl);          // sigma^2 > 2 ell
    CHECK_THROWS_AS(tree1(1, 2, {{0, -1}}), BadControl);
    CHECK_THROWS_AS(build_tree(TimeGrid{1, 20}, controls1({{0.1, 1}, {-0.1, 1}}), 1000), CapExceeded);
}

TEST_CASE("tree structure is reproducible from increment strings") {
    auto t = tree1(1.5, 3, {{0.3, 0.7}, {-0.2, 1.1}});
    for (NodeId n = 0; n < t.size(); ++n) {
        NodeId p = t.parent(n);
        if (p < 0) continue;
        int j = static_cast<int>((n - t.level_begin(t.step(n))) % t.branching());
        CHECK(t.value(n)[0] == doctest::Approx(t.value(p)[0] + t.increments()(0, j)));
        CHECK(t.child(p, j) == n);
        CHECK(t.ancestor(n, 0) == 0);
    }
}

TEST_CASE("one_step_sup examples") {
    SUBCASE("linear payoff picks the largest drift") {
        auto t = tree1(1, 1, {{-0.5, 1}, {0, 1}, {0.5, 1}}, 0.5);
        Field v(t.size());
        for (NodeId n = 0; n < t.size(); ++n) v[n] = t.value(n)[0];
        CHECK(one_step_sup(t, 0, v) == doctest::Approx(0.5));
        CHECK(one_step_argmax(t, 0, v).second == 2);
    }
    SUBCASE("constant is preserved") {
        auto t = tree1(1, 1, {{0.2, 0.9}});
        CHECK(one_step_sup(t, 0, Field::Constant(t.size(), 3.25)) == 3.25);
    }
    SUBCASE("convex payoff picks the largest volatility") {
        auto t = tree1(1, 1, {{0, 0.5}, {0, 1}}, 0.5);
        Field v(t.size());
        for (NodeId n = 0; n < t.size(); ++n) v[n] = std::abs(t.value(n)[0]);
        CHECK(one_step_sup(t, 0, v) == doctest::Approx(1));
    }
    SUBCASE("ties go to the lowest index") {
        auto t = tree1(1, 1, {{0, 1}, {0, 0.5}});
        CHECK(one_step_argmax(t, 0, Field::Constant(t.size(), 1)).second == 0);
    }
}

TEST_CASE("nonlinear_expectation examples") {
    auto t = tree1(2, 2, {{0, 1}});  // dt = 1
    CHECK(nonlinear_expectation(t, Field::Constant(t.size(), 5), 0) == 5);
    Field sq(t.size());
    for (NodeId n = 0; n < t.size(); ++n) sq[n] = std::pow(t.value(n)[0], 2);
    CHECK(nonlinear_expectation(t, sq, 0) == doctest::Approx(2));

    auto u = tree1(1, 1, {{0.5, 1}, {-0.5, 1}});
    Field b(u.size());
    for (NodeId n = 0; n < u.size(); ++n) b[n] = u.value(n)[0];
    CHECK(nonlinear_expectation(u, b, 0) == doctest::Approx(0.5));
    auto bf = brute_force_value(u, [&] { Field f = b; f[0] = -1e9; return f; }());
    CHECK(bf.value == doctest::Approx(0.5));
}

TEST_CASE("sublinear axioms and tower property on random subtrees") {
    for (unsigned seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto t = random_tree(rng);
        Field xi = random_field(t, rng), eta = random_field(t, rng);
        Field big = xi.cwiseMax(eta);
        double c = std::uniform_real_distribution<double>(0, 3)(rng);
        Field Exi = expectation_field(t, xi), Eeta = expectation_field(t, eta);
        Field Ebig = expectation_field(t, big), Esum = expectation_field(t, xi + eta);
        Field Ec = expectation_field(t, c * xi), Econst = expectation_field(t, Field::Constant(t.size(), c));
        for (NodeId n = 0; n < t.size(); ++n) {
            CHECK(Exi[n] <= Ebig[n] + 1e-10);
            CHECK(std::abs(Econst[n] - c) <= 1e-10);
            CHECK(std::abs(Ec[n] - c * Exi[n]) <= 1e-10);
            CHECK(Esum[n] <= Exi[n] + Eeta[n] + 1e-10);
        }
        // tower: conditioning at an intermediate level changes nothing
        int mid = t.steps() / 2;
        Field inner = expectation_field(t, xi);
        Field staged = Field::Zero(t.size());
        for (NodeId n = t.level_begin(mid); n < t.level_end(mid); ++n) staged[n] = inner[n];
        for (int i = mid - 1; i >= 0; --i)
            for (NodeId n = t.level_begin(i); n < t.level_end(i); ++n) staged[n] = one_step_sup(t, n, staged);
        CHECK(staged[0] == inner[0]);
    }
}

TEST_CASE("modulus: closed form is monotone and scales with C_hat") {
    Modulus lin{1, 1, 1};
    double chat = rho_hat_constant(lin, 1, 1);
    CHECK(rho_hat_analytic(lin, 1, 1, 1.0) == doctest::Approx(chat));
    double prev = 0;
    for (double d = 0.01; d < 4; d *= 1.3) {
        double v = rho_hat_analytic(Modulus{0.7, 0.8, 2.5}, 0.5, 2, d);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(rho_hat_analytic(lin, 1, 1, 0.0), BadDelta);
    auto h = ModulusHat::analytic(lin, 1, 1);
    CHECK(h(0) == 0);
}

TEST_CASE("verify_modulus_bound examples") {
    auto t = tree1(1, 1, {{0, 1}});  // dt = 1
    Modulus lin{1, 1, 1};
    // zeta = T gives rho(delta) = 1, zeta = 0 gives E[1 + |B_1|] = 2
    CHECK(modulus_supremum(t, lin, 1.0) == doctest::Approx(2));
    CHECK(brute_force_rho_hat(t, lin, 1.0) == doctest::Approx(2));
    auto r = verify_modulus_bound(t, Modulus{0, 1, 1}, 0.5, 0);
    CHECK(r.lhs == 0);
    CHECK(r.pass);
    // containment of the zeta = 0 candidate with a window covering the path
    auto u = tree1(1, 3, {{0.3, 1}, {-0.2, 0.6}});
    Field run(u.size());
    for (NodeId n = 0; n < u.size(); ++n) {
        double m = 0;
        for (NodeId a = n; a >= 0; a = u.parent(a)) m = std::max(m, std::abs(u.value(a)[0]));
        run[n] = lin(1.5 + m);
    }
    CHECK(modulus_supremum(u, lin, 1.5) >= nonlinear_expectation(u, run, 0) - 1e-12);
}

TEST_CASE("exhaustive modulus matches the oracle and stays below the analytic constant") {
    for (unsigned seed = 3; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        auto t = random_tree(rng);
        if (t.steps() > 3) continue;
        Modulus rho{1.3, 0.7, 1.6};
        auto ana = ModulusHat::analytic(rho, t.controls().ell, 1);
        auto exh = ModulusHat::exhaustive(t, rho);
        for (double d : default_delta_grid(t.grid())) {
            CHECK(exh(d) == doctest::Approx(brute_force_rho_hat(t, rho, d)).epsilon(1e-12));
            CHECK(verify_modulus_bound(t, rho, d, ana(d)).pass);
        }
        auto cal = ModulusHat::calibrated(t, rho, default_delta_grid(t.grid()));
        CHECK(cal.c_hat() <= ana.c_hat());
        for (double d : default_delta_grid(t.grid())) CHECK(verify_modulus_bound(t, rho, d, cal(d)).pass);
    }
}
