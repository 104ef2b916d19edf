#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "uavopt/oracle.hpp"

using namespace uavopt;

namespace {
// Tiny instance tuned so grid actions are kinematically meaningful:
// Delta_T = 2 s aligns the velocity grid with the acceleration cap.
Scenario tiny_scenario(const std::string& extra = "") {
    return testsupport::desk_scenario(2, 1, 1, "[horizon]\nDelta_T = 2\n[limits]\nV_max_xy = 4\nV_max_z = 4\na_max = 2\n" + extra);
}
}  // namespace

TEST_CASE("oracle: zero-power-only grid gives zero throughput") {
    auto sc = tiny_scenario();
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 2;
    g.n_vxy = 1;
    g.n_vz = 1;
    // Force the only power level to zero by zeroing P_max.
    sc.constants.P_max = 0.0;
    auto res = oracle_search(sc, ch, g);
    REQUIRE(res.feasible);
    CHECK(res.objective_bps == 0.0);
}

TEST_CASE("oracle: single slot allocates full power to the subcarrier") {
    auto sc = testsupport::desk_scenario(1, 1, 1);
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 5;
    g.n_vxy = 1;
    g.n_vz = 1;
    auto res = oracle_search(sc, ch, g);
    REQUIRE(res.feasible);
    CHECK(res.plan.p(0, 0, 0) == Catch::Approx(sc.constants.P_max));
    const double expect =
        rate(sc.constants.P_max, ch.at(0, 0, 0), res.plan.r[0], sc.users[0], sc.constants.B);
    CHECK(res.objective_bps == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("oracle: infeasible terminal energy is reported infeasible") {
    auto sc = tiny_scenario("[limits]\nq0_wh = 1\nq_end_wh = 200\nq_max_wh = 222\n");
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 3;
    g.n_vxy = 1;
    g.n_vz = 3;
    auto res = oracle_search(sc, ch, g);
    CHECK_FALSE(res.feasible);
}

TEST_CASE("oracle: moving toward the user beats hovering when reachable") {
    // One user 16 m away; with Delta_T = 2 s and V = 4 m/s the UAV can close
    // most of the gap inside two slots.
    auto sc = load_scenario(testsupport::desk_config(2, 1, 1,
                                                     "[horizon]\nDelta_T = 2\n[limits]\nV_max_xy "
                                                     "= 4\nV_max_z = 4\na_max = 2\n"));
    sc.users[0] = {16.0, 0.0};
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 3;
    g.n_vxy = 5;
    g.n_vz = 1;
    auto res = oracle_search(sc, ch, g);
    REQUIRE(res.feasible);
    CHECK(res.plan.v[0][0] > 0.0);  // horizontal motion toward the user
    // And the realized objective beats the forced-hover grid.
    OracleGrids hover = g;
    hover.n_vxy = 1;
    auto res_h = oracle_search(sc, ch, hover);
    REQUIRE(res_h.feasible);
    CHECK(res.objective_bps > res_h.objective_bps);
}

TEST_CASE("oracle respects the evaluation cap") {
    auto sc = tiny_scenario();
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 6;
    g.n_vxy = 5;
    g.n_vz = 5;
    g.max_evals = 10;
    CHECK_THROWS(oracle_search(sc, ch, g));
}

TEST_CASE("oracle battery path obeys the ledger and terminal constraint") {
    auto sc = tiny_scenario();
    auto ch = generate_channels(sc);
    OracleGrids g;
    g.n_power = 3;
    g.n_vxy = 3;
    g.n_vz = 3;
    auto res = oracle_search(sc, ch, g);
    REQUIRE(res.feasible);
    for (int t = 0; t <= sc.N_T; ++t) {
        CHECK(res.plan.q[t] >= -1e-9);
        CHECK(res.plan.q[t] <= sc.limits.q_max + 1e-9);
    }
    CHECK(res.plan.q[sc.N_T] >= sc.limits.q_end - 1e-9);
    for (int t = 0; t < sc.N_T; ++t) {
        const double expected = std::min(
            sc.limits.q_max,
            res.plan.q[t] +
                (solar_power_bound(res.plan.r[t][2], sc.derived, sc.solar) - res.plan.t[t]) *
                    sc.Delta_T);
        CHECK(res.plan.q[t + 1] == Catch::Approx(expected).margin(1e-6));
    }
}
