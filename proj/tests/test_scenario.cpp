#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "test_support.hpp"
#include "uavopt/philox.hpp"
#include "uavopt/scenario.hpp"

using namespace uavopt;

TEST_CASE("philox matches the reference vectors") {
    auto b0 = Philox4x32::generate(0, 0, 0, 0, 0);
    CHECK(b0[0] == 0x6627e8d5u);
    CHECK(b0[1] == 0xe169c58du);
    CHECK(b0[2] == 0xbc57ac4cu);
    CHECK(b0[3] == 0x9b00dbd8u);

    auto b1 = Philox4x32::generate(0xffffffffffffffffull, 0xffffffffu, 0xffffffffu, 0xffffffffu,
                                   0xffffffffu);
    CHECK(b1[0] == 0x408f276du);
    CHECK(b1[1] == 0x41c83b0eu);
    CHECK(b1[2] == 0xa20bc7c6u);
    CHECK(b1[3] == 0x6d5451fdu);

    auto b2 = Philox4x32::generate(0x299f31d0a4093822ull, 0x243f6a88u, 0x85a308d3u, 0x13198a2eu,
                                   0x03707344u);
    CHECK(b2[0] == 0xd16cfe09u);
    CHECK(b2[1] == 0x94fdccebu);
    CHECK(b2[2] == 0x5001e420u);
    CHECK(b2[3] == 0x24126ea1u);
}

TEST_CASE("derived constants reproduce the hand-evaluated values") {
    auto sc = load_scenario(testsupport::table_config());
    // Independent closed-form evaluations.
    CHECK(sc.derived.zeta == Catch::Approx(1.1631258326288778e-3).epsilon(1e-12));
    CHECK(sc.derived.V_h == Catch::Approx(9.428090415820634).epsilon(1e-12));
    CHECK(sc.derived.rho1 == Catch::Approx(4927.748590668918).epsilon(1e-12));
    CHECK(sc.derived.rho2 == Catch::Approx(0.002205).epsilon(1e-12));
    CHECK(sc.derived.C1 == Catch::Approx(546.3013829412349).epsilon(1e-12));
    CHECK(sc.derived.C2 == Catch::Approx(0.49861705876520956).epsilon(1e-12));
    CHECK(sc.derived.E_const == Catch::Approx(2.3911438837237178).epsilon(1e-12));
    CHECK(sc.derived.W_weight == Catch::Approx(39.2).epsilon(1e-14));
    // dBm conversion oracle.
    CHECK(sc.constants.P_max == Catch::Approx(15.848931924611133).epsilon(1e-12));
    CHECK(sc.constants.N0 == Catch::Approx(3.981071705534985e-21).epsilon(1e-12));
    CHECK(sc.constants.kappa == Catch::Approx(3.9810717055349722).epsilon(1e-12));
    CHECK(sc.constants.B * sc.constants.N_F == Catch::Approx(sc.constants.W_bw));
    CHECK(sc.limits.q0 == Catch::Approx(111.0 * 3600.0));
}

TEST_CASE("beta_c = 0 collapses the cloud model") {
    auto sc = testsupport::desk_scenario(2, 1, 1);
    CHECK(sc.derived.C1 == 0.0);
    CHECK(sc.derived.C2 == Catch::Approx(0.4 * 1.0 * 1367.0));
    CHECK(std::isinf(sc.derived.E_const));
    CHECK(sc.derived.E_const < 0.0);
}

TEST_CASE("derive_constants rejects nonpositive inputs") {
    PhysicalConstants pc;
    SolarParams sp;
    AeroParams ap;
    LimitsParams lp;
    ap.m = 0.0;
    CHECK_THROWS_AS(derive_constants(pc, sp, ap, lp, 0.02), std::invalid_argument);
    ap.m = 4.0;
    pc.f0 = -1.0;
    CHECK_THROWS_AS(derive_constants(pc, sp, ap, lp, 0.02), std::invalid_argument);
}

TEST_CASE("derive_constants is pure: config round trip is bit-identical") {
    auto sc1 = load_scenario(testsupport::table_config());
    auto sc2 = load_scenario(testsupport::table_config());
    CHECK(sc1.derived.zeta == sc2.derived.zeta);
    CHECK(sc1.derived.E_const == sc2.derived.E_const);
    auto d = derive_constants(sc1.constants, sc1.solar, sc1.aero, sc1.limits, sc1.Delta_T);
    CHECK(d.zeta == sc1.derived.zeta);
    CHECK(d.V_h == sc1.derived.V_h);
    CHECK(d.C1 == sc1.derived.C1);
}

TEST_CASE("config validation names the offending field") {
    auto no_users = testsupport::table_config();
    auto pos = no_users.find("[users]");
    no_users = no_users.substr(0, pos) + "[solver]\nseed = 1\n";
    try {
        load_scenario(no_users);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("users") != std::string::npos);
    }

    CHECK_THROWS_AS(load_scenario(testsupport::table_config("[limits]\nq_end_wh = 500\n")),
                    std::invalid_argument);
}

TEST_CASE("channel generation is deterministic and order independent") {
    auto sc = load_scenario(testsupport::table_config());
    sc.N_T = 3;
    auto a = generate_channels(sc);
    auto b = generate_channels(sc);
    CHECK(a.H == b.H);
    // Individual draws match the tensor regardless of evaluation order.
    const double scale = sc.derived.zeta / (sc.constants.N0 * sc.constants.B);
    CHECK(a.at(2, 5, 1) == scale * rician_h2(sc.seed, sc.constants.kappa, 2, 5, 1));
    auto sc2 = sc;
    sc2.seed = 999;
    auto c = generate_channels(sc2);
    CHECK(a.at(0, 0, 0) != c.at(0, 0, 0));
}

TEST_CASE("kappa -> inf gives the deterministic LoS channel") {
    auto sc = load_scenario(testsupport::table_config());
    sc.constants.kappa = std::numeric_limits<double>::infinity();
    sc.N_T = 2;
    auto t = generate_channels(sc);
    const double scale = sc.derived.zeta / (sc.constants.N0 * sc.constants.B);
    for (double h : t.H) CHECK(h == Catch::Approx(scale).epsilon(1e-15));
}

TEST_CASE("rician |h|^2 statistics match the closed form") {
    const double kappa = 3.9810717055349722;
    const int draws = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int n = 0; n < draws; ++n) {
        const double h2 = rician_h2(42, kappa, 0, 0, n);
        sum += h2;
        sum2 += h2 * h2;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    const double var_expected = (2.0 * kappa + 1.0) / ((kappa + 1.0) * (kappa + 1.0));
    // Mean 1 within 0.01 (spec tolerance at 1e5 draws).
    CHECK(std::abs(mean - 1.0) < 0.01);
    // Variance within 3 standard errors. Var{|h|^2 stats}: se ~ sqrt(Var of
    // squared samples / n); a generous bound uses 4th-moment ~ 3 var^2.
    const double se = 3.0 * var_expected * 3.0 / std::sqrt(static_cast<double>(draws));
    CHECK(std::abs(var - var_expected) < se);
}

TEST_CASE("seeded user placement stays inside the disc and is reproducible") {
    auto sc = load_scenario(testsupport::table_config());
    REQUIRE(sc.users.size() == 4);
    for (const auto& u : sc.users) CHECK(u[0] * u[0] + u[1] * u[1] <= 800.0 * 800.0 + 1e-9);
    auto sc2 = load_scenario(testsupport::table_config());
    CHECK(sc.users == sc2.users);
    // R_req split across users
    for (int k = 0; k < 4; ++k) CHECK(sc.R_req(k) == Catch::Approx(12.5e6));
}
