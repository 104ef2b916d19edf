#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "test_support.hpp"
#include "uavopt/polyblock.hpp"
#include "uavopt/programs.hpp"

using namespace uavopt;

namespace {

// Random interior point of a program's box, biased toward the seed.
convex::Vec interior_point(const convex::Program& p, std::mt19937& rng) {
    std::uniform_real_distribution<double> unif(0.3, 0.7);
    convex::Vec x = p.x_init;
    for (int i = 0; i < p.n; ++i) {
        if (std::isfinite(p.lo[i]) && std::isfinite(p.hi[i]))
            x[i] = p.lo[i] + unif(rng) * (p.hi[i] - p.lo[i]);
        else if (std::isfinite(p.lo[i]))
            x[i] = p.lo[i] + 1.0 + unif(rng);
        else if (std::isfinite(p.hi[i]))
            x[i] = p.hi[i] - 1.0 - unif(rng);
    }
    return x;
}

ProjectionParams make_params(const Scenario& sc, const GainsView& g, std::vector<double>& chi,
                             std::vector<double>& mu, double lambda) {
    chi.assign(static_cast<std::size_t>(g.K) * g.N_F * g.T, 0.0);
    for (int t = 0; t < g.T; ++t)
        for (int i = 0; i < g.N_F; ++i)
            for (int k = 0; k < g.K; ++k)
                chi[(static_cast<std::size_t>(t) * g.N_F + i) * g.K + k] =
                    1.0 + g.at(k, i, t) * sc.constants.P_max;
    mu.assign(g.T, 1.0 / (std::sqrt(2.0) * sc.derived.V_h));
    ProjectionParams pp;
    pp.chi = chi;
    pp.mu = mu;
    pp.lambda = lambda;
    return pp;
}

ScaPoint hover_point(const Scenario& sc, const GainsView& g) {
    ScaPoint pt;
    const int K = g.K, NF = g.N_F, T = g.T;
    pt.ptilde.assign(static_cast<std::size_t>(K) * NF * T, 1e-3);
    pt.theta.assign(static_cast<std::size_t>(K) * T, 0.0);
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k)
            pt.theta[static_cast<std::size_t>(t) * K + k] = sqdist(sc.r_init, sc.users[k]) + 1.0;
    pt.vx.assign(T, 0.0);
    pt.vy.assign(T, 0.0);
    pt.l.assign(T, 1e-3);
    pt.varpi.assign(T, std::max(sc.derived.C1 * sc.Delta_T * 1e-3, 1e-9));
    return pt;
}

}  // namespace

TEST_CASE("harvest envelope over-estimates the sigmoid and stays concave") {
    const double kc = 0.05, alpha = 1351.0;
    auto s = [&](double z) { return convex::sigmoid(kc * (z - alpha)); };
    struct Window {
        double lo, hi;
    };
    for (Window w : {Window{100.0, 300.0}, Window{100.0, 1600.0}, Window{1351.0, 1600.0},
                     Window{1200.0, 1380.0}, Window{1340.0, 1360.0}, Window{500.0, 1352.0}}) {
        auto env = harvest_envelope(kc, alpha, w.lo, w.hi);
        double prev2 = 0.0, prev = 0.0;
        int seen = 0;
        for (int i = 0; i <= 400; ++i) {
            const double z = w.lo + (w.hi - w.lo) * i / 400.0;
            const double e = env.value(kc, alpha, z);
            REQUIRE(e >= s(z) - 1e-9);
            if (seen >= 2) REQUIRE(prev2 - 2.0 * prev + e <= 1e-9);  // concavity
            prev2 = prev;
            prev = e;
            ++seen;
        }
        if (env.mode != HarvestEnv::CONST) {
            CHECK(env.value(kc, alpha, w.lo) == Catch::Approx(s(w.lo)).margin(1e-9));
            CHECK(env.value(kc, alpha, w.hi) == Catch::Approx(s(w.hi)).margin(1e-9));
        }
    }
}

TEST_CASE("projection program: gradient oracles pass finite differences") {
    auto sc = testsupport::desk_scenario(3, 2, 2, "[limits]\nR_req = 1e6\n");
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    std::vector<double> chi, mu;
    auto pp = make_params(sc, gains, chi, mu, 0.7);
    auto wp = build_window_program(sc, gains, initial_state(sc), nullptr, &pp, nullptr);

    std::mt19937 rng(3);
    for (const auto& term : wp.prog.ineq) {
        for (int trial = 0; trial < 10; ++trial) {
            auto x = interior_point(wp.prog, rng);
            std::vector<double> xloc(term->vars().size());
            for (std::size_t i = 0; i < term->vars().size(); ++i) xloc[i] = x[term->vars()[i]];
            const double err = convex::fd_gradient_error(*term, xloc);
            INFO(term->name());
            REQUIRE(err < 1e-5);
        }
    }
}

TEST_CASE("sca subproblem: gradient oracles pass finite differences") {
    auto sc = testsupport::desk_scenario(3, 2, 2, "[limits]\nR_req = 1e6\n");
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    auto pt = hover_point(sc, gains);
    auto wp = build_window_program(sc, gains, initial_state(sc), nullptr, nullptr, &pt);

    std::mt19937 rng(4);
    int checked = 0;
    for (const auto& term : wp.prog.ineq) {
        for (int trial = 0; trial < 10; ++trial) {
            auto x = interior_point(wp.prog, rng);
            std::vector<double> xloc(term->vars().size());
            for (std::size_t i = 0; i < term->vars().size(); ++i) xloc[i] = x[term->vars()[i]];
            const double err = convex::fd_gradient_error(*term, xloc);
            INFO(term->name());
            REQUIRE(err < 1e-5);
            ++checked;
        }
    }
    for (const auto& term : wp.prog.obj_terms) {
        auto x = interior_point(wp.prog, rng);
        std::vector<double> xloc(term->vars().size());
        for (std::size_t i = 0; i < term->vars().size(); ++i) xloc[i] = x[term->vars()[i]];
        REQUIRE(convex::fd_gradient_error(*term, xloc) < 1e-5);
    }
    CHECK(checked > 100);
}

TEST_CASE("single-slot projection program has the hand-counted constraint tally") {
    auto sc = testsupport::desk_scenario(1, 1, 1);
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    std::vector<double> chi, mu;
    auto pp = make_params(sc, gains, chi, mu, 0.9);
    auto wp = build_window_program(sc, gains, initial_state(sc), nullptr, &pp, nullptr);

    // T=1, K=1, N_F=1: one row each of C1a, C1b, C11, C15, C8, C17,
    // C2_cap, C19; no C4 without a previous slot.
    std::map<std::string, int> tally;
    for (const auto& t : wp.prog.ineq) tally[t->name()]++;
    CHECK(tally["C1a"] == 1);
    CHECK(tally["C1b"] == 1);
    CHECK(tally["C11"] == 1);
    CHECK(tally["C15"] == 1);
    CHECK(tally["C8"] == 1);
    CHECK(tally["C17"] == 1);
    CHECK(tally["C2_cap"] == 1);
    CHECK(tally["C19"] == 1);
    CHECK(wp.prog.ineq.size() == 8);
    // Equalities: battery boundary + 3 kinematic rows.
    CHECK(wp.prog.A.rows() == 4);

    // chi below 1 leaves no C19 row.
    std::vector<double> chi2(chi.size(), 0.5), mu2(mu);
    ProjectionParams low;
    low.chi = chi2;
    low.mu = mu2;
    low.lambda = 1.0;
    auto wp2 = build_window_program(sc, gains, initial_state(sc), nullptr, &low, nullptr);
    std::map<std::string, int> tally2;
    for (const auto& t : wp2.prog.ineq) tally2[t->name()]++;
    CHECK(tally2["C19"] == 0);
}

TEST_CASE("lambda = 0 relaxes the scaled rows to a plain feasibility check") {
    auto sc = testsupport::desk_scenario(2, 1, 1);
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    std::vector<double> chi, mu;
    auto pp = make_params(sc, gains, chi, mu, 0.0);
    auto wp = build_window_program(sc, gains, initial_state(sc), nullptr, &pp, nullptr);
    auto res = convex::solve_feasibility(wp.prog, 1e-9);
    CHECK(res.status == convex::SolveStatus::Feasible);
}

TEST_CASE("monotone lambda feasibility: lower scalings stay feasible") {
    auto sc = testsupport::desk_scenario(2, 2, 1);
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> chi, mu;
    int feasible_pairs = 0;
    for (int trial = 0; trial < 12; ++trial) {
        double l1 = unif(rng), l2 = unif(rng);
        if (l1 > l2) std::swap(l1, l2);
        auto p2 = make_params(sc, gains, chi, mu, l2);
        auto wp2 = build_window_program(sc, gains, initial_state(sc), nullptr, &p2, nullptr);
        auto r2 = convex::solve_feasibility(wp2.prog, 1e-9);
        if (r2.status != convex::SolveStatus::Feasible) continue;
        std::vector<double> chi1, mu1;
        auto p1 = make_params(sc, gains, chi1, mu1, l1);
        auto wp1 = build_window_program(sc, gains, initial_state(sc), nullptr, &p1, nullptr);
        auto r1 = convex::solve_feasibility(wp1.prog, 1e-9);
        REQUIRE(r1.status == convex::SolveStatus::Feasible);
        ++feasible_pairs;
    }
    CHECK(feasible_pairs > 0);
}

TEST_CASE("projected witnesses satisfy every constraint at the returned lambda") {
    auto sc = testsupport::desk_scenario(2, 1, 1);
    auto ch = generate_channels(sc);
    auto gains = offline_gains(sc, ch);
    PolyblockSolver solver(sc, gains, initial_state(sc), 1);
    auto pb = solver.init_polyblock();
    auto proj = solver.project(pb.verts[0], sc.solver.eps2);
    REQUIRE(proj.base_feasible);
    CHECK(proj.lambda > 0.0);
    CHECK(proj.lambda <= 1.0);

    std::vector<double> chi(pb.verts[0].chi.data(),
                            pb.verts[0].chi.data() + pb.verts[0].chi.size());
    std::vector<double> mu(pb.verts[0].mu.data(), pb.verts[0].mu.data() + pb.verts[0].mu.size());
    ProjectionParams pp;
    pp.chi = chi;
    pp.mu = mu;
    pp.lambda = proj.lambda;
    auto wp = build_window_program(sc, gains, initial_state(sc), nullptr, &pp, nullptr);
    auto [viol, name] = wp.prog.max_violation(proj.witness);
    INFO(name);
    CHECK(viol <= 1e-7);
}
