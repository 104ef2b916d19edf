#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "test_support.hpp"
#include "uavopt/rate_model.hpp"

using namespace uavopt;

TEST_CASE("rate: zero power, unit SINR, and arithmetic oracle") {
    const double B = 78125.0;
    std::array<double, 3> r{0, 0, 100};
    std::array<double, 2> user{0, 0};
    CHECK(rate(0.0, 1e9, r, user, B) == 0.0);
    // H p / d^2 = 1  ->  exactly B
    const double d2 = sqdist(r, user);
    CHECK(rate(1.0, d2, r, user, B) == Catch::Approx(B).epsilon(1e-12));
    std::array<double, 3> r2{100, 0, 0};  // distance 100 from origin user
    CHECK(rate(1.0, 1e6, r2, user, B) == Catch::Approx(B * std::log2(101.0)).epsilon(1e-12));
}

TEST_CASE("penalized rate reduces to the plain rate on exclusive subcarriers") {
    const double B = 78125.0;
    std::array<double, 3> r{50, -20, 300};
    std::array<double, 2> user{10, 10};
    const double H = 3.7e12;
    const double theta = sqdist(r, user);
    std::vector<double> row{2.5, 0.0, 0.0};
    CHECK(penalized_rate(row, 0, H, theta, 1e6, B) ==
          Catch::Approx(rate(2.5, H, r, user, B)).epsilon(1e-12));
}

TEST_CASE("penalized rate crushes shared subcarriers and is monotone in theta") {
    const double B = 78125.0;
    const double H = 3.7e12;
    std::vector<double> shared{1.0, 1.0};
    const double r_shared = penalized_rate(shared, 0, H, 1e4, 1e6, B);
    // With xi = 1e6 the SINR is below 1/xi' ~ 1e-6 regardless of power.
    CHECK(r_shared < B * std::log2(1.0 + 2e-6));
    CHECK(r_shared >= 0.0);

    std::vector<double> solo{1.0, 0.0};
    const double r1 = penalized_rate(solo, 0, H, 1e4, 1e6, B);
    const double r2 = penalized_rate(solo, 0, H, 2e4, 1e6, B);
    CHECK(r2 < r1);
}

TEST_CASE("penalty-rate sandwich: penalized <= plain everywhere") {
    const double B = 78125.0;
    const double H = 1e12;
    std::array<double, 3> r{0, 0, 150};
    std::array<double, 2> user{30, -40};
    for (int trial = 0; trial < 200; ++trial) {
        const double pk = 0.1 + 0.07 * trial;
        const double pj = (trial % 3 == 0) ? 0.0 : 0.01 * trial;
        const double theta = sqdist(r, user) * (1.0 + 0.01 * (trial % 7));
        std::vector<double> row{pk, pj};
        const double lhs = penalized_rate(row, 0, H, theta, 1e6, B);
        const double rhs = rate(pk, H, r, user, B);
        REQUIRE(lhs <= rhs + 1e-9);
    }
}

TEST_CASE("recover_assignment thresholds and flags violations") {
    Plan plan;
    plan.resize(1, 2, 2, 1);  // T=2, K=2, N_F=1
    plan.ptilde[plan.pidx(0, 0, 0)] = 1e-12;
    plan.ptilde[plan.pidx(1, 0, 0)] = 0.5;
    plan.ptilde[plan.pidx(0, 0, 1)] = 0.0;
    plan.ptilde[plan.pidx(1, 0, 1)] = 0.0;
    CHECK(recover_assignment(plan));
    CHECK_FALSE(plan.s(0, 0, 0));
    CHECK(plan.s(1, 0, 0));
    CHECK_FALSE(plan.s(0, 0, 1));
    CHECK_FALSE(plan.s(1, 0, 1));

    plan.ptilde[plan.pidx(0, 0, 0)] = 0.3;  // now two active users share (i, n)
    ExclusivityViolation viol;
    CHECK_FALSE(recover_assignment(plan, kAssignThreshold, &viol));
    CHECK(viol.i == 0);
    CHECK(viol.n == 0);
    CHECK(viol.users == 2);
}

TEST_CASE("expected-rate upper bound against a Monte-Carlo oracle") {
    auto sc = uavopt::load_scenario(testsupport::desk_config(1, 1, 1));
    const double B = sc.constants.B;
    const double kappa = sc.constants.kappa;
    const double scale = sc.derived.zeta / (sc.constants.N0 * sc.constants.B);
    std::array<double, 3> r{0, 0, 120};
    std::array<double, 2> user{40, 10};

    const double p = 2.0;
    const int M = 10000;
    double mc = 0.0;
    for (int m = 0; m < M; ++m)
        mc += rate(p, scale * rician_h2(5, kappa, 0, 0, m), r, user, B);
    mc /= M;
    const double ub = expected_rate_upper(p, scale, r, user, B);
    CHECK(mc <= ub + 1e-6);
    // Gap bounded by B (2k+1)/(ln2 (k+1)^2) (Rician variance bound).
    const double cap = B * (2 * kappa + 1) / (std::log(2.0) * (kappa + 1) * (kappa + 1));
    CHECK(ub - mc <= cap);
    // Deterministic channel: bound is exact.
    CHECK(expected_rate_upper(0.0, scale, r, user, B) == 0.0);
    double det = rate(p, scale * 1.0, r, user, B);
    CHECK(det == Catch::Approx(expected_rate_upper(p, scale, r, user, B)).epsilon(1e-15));
}

TEST_CASE("qos table: trivial, boundary, and mixed") {
    auto sc = testsupport::desk_scenario(2, 1, 1);
    auto ch = generate_channels(sc);
    Plan plan;
    plan.resize(1, 2, 1, 1);
    plan.r[0] = {0, 0, 100};
    plan.r[1] = {0, 0, 100};
    plan.ptilde[plan.pidx(0, 0, 0)] = 1.0;
    plan.ptilde[plan.pidx(0, 0, 1)] = 0.0;
    recover_assignment(plan);

    // R_req = 0: always satisfied.
    auto table = qos_satisfied(plan, sc, ch);
    CHECK(table[0][0]);
    CHECK(table[0][1]);

    // Exact boundary: R_req equal to the realized rate is satisfied.
    const double r0 = rate(1.0, ch.at(0, 0, 0), plan.r[0], sc.users[0], sc.constants.B);
    sc.limits.R_req_k = {r0};
    auto table2 = qos_satisfied(plan, sc, ch);
    CHECK(table2[0][0]);
    CHECK_FALSE(table2[0][1]);
}
