#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "uavopt/physics.hpp"

using namespace uavopt;

namespace {
Scenario table() { return load_scenario(testsupport::table_config()); }
}  // namespace

TEST_CASE("solar output matches the hand-evaluated piecewise values") {
    auto sc = table();
    CHECK(solar_power_actual(1500.0, sc.solar) == Catch::Approx(546.8).epsilon(1e-12));
    CHECK(solar_power_actual(600.0, sc.solar) ==
          Catch::Approx(546.8 * std::exp(-7.0)).epsilon(1e-12));
    // Continuity at the cloud top.
    CHECK(solar_power_actual(1400.0, sc.solar) ==
          Catch::Approx(solar_power_actual(1400.0 + 1e-9, sc.solar)).epsilon(1e-9));
}

TEST_CASE("solar bound: midpoint, limit, and dominance samples") {
    auto sc = table();
    CHECK(solar_power_bound(1351.0, sc.derived, sc.solar) ==
          Catch::Approx(546.3013829412349 / 2 + 0.49861705876520956).epsilon(1e-12));
    CHECK(solar_power_bound(1e9, sc.derived, sc.solar) == Catch::Approx(546.8).epsilon(1e-9));
    const double b1400 = solar_power_bound(1400.0, sc.derived, sc.solar);
    CHECK(b1400 == Catch::Approx(503.4026107219474).epsilon(1e-10));
    CHECK(b1400 <= solar_power_actual(1400.0, sc.solar));
}

TEST_CASE("solar bound dominance and monotonicity over an altitude grid") {
    auto sc = table();
    double prev_b = -1.0, prev_a = -1.0;
    for (int i = 0; i <= 10000; ++i) {
        const double z = 2.0 * sc.limits.z_max * i / 10000.0;
        const double b = solar_power_bound(z, sc.derived, sc.solar);
        const double a = solar_power_actual(z, sc.solar);
        REQUIRE(b <= a + 1e-9);
        REQUIRE(b >= prev_b - 1e-12);
        REQUIRE(a >= prev_a - 1e-12);
        prev_b = b;
        prev_a = a;
    }
}

TEST_CASE("aerodynamic power matches the hand-evaluated values") {
    auto sc = table();
    const double hover = aero_power({0, 0, 0}, sc.derived);
    CHECK(hover == Catch::Approx(369.58114430016883).epsilon(1e-12));
    CHECK(aero_power({0, 0, 4}, sc.derived) == Catch::Approx(hover + 39.2 * 4).epsilon(1e-12));
    const double level10 = aero_level_power(100.0, sc.derived);
    CHECK(level10 < hover);
    CHECK(level10 == Catch::Approx(282.63836941).epsilon(1e-9));
    CHECK(aero_power({10, 0, 0}, sc.derived) == Catch::Approx(level10 + 2.205).epsilon(1e-12));
}

TEST_CASE("aero power properties: speed monotone level term, isotropy, descent") {
    auto sc = table();
    double prev = aero_level_power(0.0, sc.derived);
    for (int i = 1; i <= 100; ++i) {
        const double w2 = i * 4.0;
        const double lv = aero_level_power(w2, sc.derived);
        REQUIRE(lv < prev);
        prev = lv;
    }
    CHECK(aero_power({3, -4, 2}, sc.derived) ==
          Catch::Approx(aero_power({-3, 4, 2}, sc.derived)).epsilon(1e-14));
    CHECK(aero_power({0, 0, -4}, sc.derived) < aero_power({0, 0, 0}, sc.derived));
}

TEST_CASE("ledger step: balance, clamp, and arithmetic oracle") {
    auto sc = table();
    // consumed == harvested -> unchanged (cloudless actual above cloud).
    auto bal = ledger_step(1000.0, 546.8, 1500.0, 0.02, false, sc);
    CHECK(bal.q_next == Catch::Approx(1000.0).epsilon(1e-12));
    CHECK_FALSE(bal.depleted);

    auto clamp = ledger_step(sc.limits.q_max, 0.0, 1500.0, 0.02, false, sc);
    CHECK(clamp.q_next == sc.limits.q_max);
    // Differences at battery scale carry ~1e-10 J of float noise.
    CHECK(clamp.overflow == Catch::Approx(546.8 * 0.02).margin(1e-6));

    auto mid = ledger_step(400e3, 400.0, 1500.0, 0.02, false, sc);
    CHECK(mid.q_next == Catch::Approx(400e3 + (546.8 - 400.0) * 0.02).epsilon(1e-13));

    auto dep = ledger_step(1.0, 1000.0, 1500.0, 0.02, false, sc);
    CHECK(dep.depleted);
}

TEST_CASE("planning with the bound never credits more than reality") {
    auto sc = table();
    for (double z : {0.0, 400.0, 700.0, 1000.0, 1351.0, 1400.0, 1600.0}) {
        const double qb = ledger_step(1e5, 200.0, z, 0.02, true, sc).q_next;
        const double qa = ledger_step(1e5, 200.0, z, 0.02, false, sc).q_next;
        REQUIRE(qb <= qa + 1e-12);
    }
}
