#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavopt/polyblock.hpp"
#include "uavopt/programs.hpp"

namespace uavopt {

// Iterate of the successive convex approximation: the linearization
// collection (p~, v, varpi, theta, l) plus the full decision vector and the
// true d.c. objective history.
struct ScaState {
    ScaPoint psi;
    convex::Vec x;
    double true_objective = std::numeric_limits<double>::infinity();  // min orientation
    int iterations = 0;
    std::vector<double> objective_history;
};

struct ScaResult {
    bool feasible = false;
    bool converged = false;
    std::string message;
    Plan plan;
    int iterations = 0;
    int repair_solves = 0;
    std::vector<ConvergenceRecord> log;
};

class ScaSolver {
public:
    ScaSolver(const Scenario& sc, GainsView gains, WindowState st, int n0,
              const Pins* pins = nullptr)
        : sc_(sc), gains_(std::move(gains)), st_(st), n0_(n0), pins_(pins) {
        K_ = gains_.K;
        NF_ = gains_.N_F;
        T_ = gains_.T;
    }

    // Hover-in-place construction: equal power split within the current
    // energy budget, auxiliaries consistent with zero horizontal speed. Used
    // as the first linearization point; feasibility is restored by a phase-I
    // solve when the hover point violates the convexified constraints.
    ScaState initial_point() const {
        ScaState s;
        s.psi.ptilde.assign(static_cast<std::size_t>(K_) * NF_ * T_, 0.0);
        s.psi.theta.assign(static_cast<std::size_t>(K_) * T_, 0.0);
        s.psi.vx.assign(T_, 0.0);
        s.psi.vy.assign(T_, 0.0);
        s.psi.l.assign(T_, -0.004);
        s.psi.varpi.assign(T_, 0.0);

        const double vh4 = std::pow(sc_.derived.V_h, 4.0);
        const double hover = sc_.derived.rho1 / std::sqrt(std::sqrt(4.0 * vh4));
        const double budget = sc_.constants.eps_pa *
                              (st_.q_start / sc_.Delta_T - hover - sc_.constants.P_static);
        const double total = std::clamp(budget, 0.0, sc_.constants.P_max);
        const double each = 0.95 * total / static_cast<double>(NF_);
        for (int t = 0; t < T_; ++t) {
            for (int i = 0; i < NF_; ++i) {
                // Round-robin ownership; a fully shared split is a symmetric
                // saddle of the penalized objective's linearization.
                const int owner = (pins_ && pins_->assigned_user)
                                      ? (*pins_->assigned_user)[static_cast<std::size_t>(t) * NF_ + i]
                                      : i % K_;
                if (owner >= 0)
                    s.psi.ptilde[(static_cast<std::size_t>(t) * NF_ + i) * K_ + owner] = each;
            }
            const double z =
                (pins_ && pins_->pin_z) ? (*pins_->pin_z)[t] : st_.r_start[2];
            for (int k = 0; k < K_; ++k)
                s.psi.theta[static_cast<std::size_t>(t) * K_ + k] =
                    sqdist({st_.r_start[0], st_.r_start[1], z}, sc_.users[k]);
            s.psi.varpi[t] = std::max(
                sc_.derived.C1 * sc_.Delta_T *
                    convex::sigmoid(sc_.solar.k_c * (z - sc_.solar.alpha)) * 0.9,
                1e-12);
        }
        return s;
    }

    WindowProgram build_subproblem(const ScaState& s) const {
        return build_window_program(sc_, gains_, st_, pins_, nullptr, &s.psi);
    }

    ScaResult solve(double eps3, int max_iters = 60) {
        ScaResult out;
        ScaState state = initial_point();
        convex::Vec warm;
        VariableLayout layout;

        for (int m = 1; m <= max_iters; ++m) {
            auto wp = build_subproblem(state);
            layout = wp.layout;
            auto res = convex::solve_min(wp.prog, 1e-8, warm.size() ? &warm : nullptr);
            if (res.status != convex::SolveStatus::Optimal) {
                if (m == 1) {
                    out.message = "subproblem infeasible (" + res.worst_constraint + ")";
                    return out;
                }
                out.message = "subproblem stalled at iteration " + std::to_string(m) + " (" +
                              res.worst_constraint + ")";
                break;
            }
            const double cand = sca_true_objective(sc_, gains_, wp.layout, res.x);
            if (m > 1 && cand > state.true_objective + 1e-9 * (1.0 + std::abs(state.true_objective))) {
                // Inexact subproblem solve failed to improve: keep the
                // previous iterate (null step) and stop.
                out.message = "null step at iteration " + std::to_string(m);
                break;
            }
            const double step = relative_step(state, res.x, wp.layout);
            update_state(state, res.x, wp.layout, cand);
            warm = res.x;
            out.log.push_back({m, -cand, -cand, 1});
            if (m > 1 && step <= eps3) {
                out.converged = true;
                break;
            }
        }
        out.iterations = state.iterations;
        if (!state.x.size()) return out;

        out.plan = extract_plan(sc_, gains_, layout, state.x, n0_, st_);
        ExclusivityViolation viol;
        if (!recover_assignment(out.plan, kAssignThreshold, &viol)) {
            // Post-hoc exclusivity: the larger recipient keeps the
            // subcarrier; one extra convex solve with the assignment fixed.
            // Failure means the relaxed iterate met the rate requirements
            // only by sharing, i.e. the exclusive problem is infeasible.
            try {
                out.plan = repair_exclusivity(state, out);
            } catch (const std::runtime_error& e) {
                out.message = e.what();
                out.feasible = false;
                return out;
            }
        }
        out.feasible = true;
        return out;
    }

    const std::vector<double>& history() const { return history_; }

private:
    void update_state(ScaState& s, const convex::Vec& x, const VariableLayout& L, double obj) {
        s.x = x;
        s.true_objective = obj;
        s.iterations += 1;
        s.objective_history.push_back(obj);
        history_ = s.objective_history;
        for (int t = 0; t < T_; ++t) {
            s.psi.vx[t] = x[L.vx(t)];
            s.psi.vy[t] = x[L.vy(t)];
            s.psi.l[t] = x[L.l(t)];
            s.psi.varpi[t] = x[L.varpi(t)];
            for (int k = 0; k < K_; ++k)
                s.psi.theta[static_cast<std::size_t>(t) * K_ + k] = x[L.theta(k, t)];
            for (int i = 0; i < NF_; ++i)
                for (int k = 0; k < K_; ++k) {
                    const int id = L.ptilde(k, i, t);
                    s.psi.ptilde[(static_cast<std::size_t>(t) * NF_ + i) * K_ + k] =
                        id >= 0 ? x[id] : 0.0;
                }
        }
    }

    double relative_step(const ScaState& s, const convex::Vec& x, const VariableLayout& L) const {
        double num = 0.0, den = 0.0;
        auto acc = [&](double a, double b) {
            num += (a - b) * (a - b);
            den += b * b;
        };
        for (int t = 0; t < T_; ++t) {
            acc(x[L.vx(t)], s.psi.vx[t]);
            acc(x[L.vy(t)], s.psi.vy[t]);
            acc(x[L.l(t)], s.psi.l[t]);
            acc(x[L.varpi(t)], s.psi.varpi[t]);
            for (int k = 0; k < K_; ++k)
                acc(x[L.theta(k, t)], s.psi.theta[static_cast<std::size_t>(t) * K_ + k]);
            for (int i = 0; i < NF_; ++i)
                for (int k = 0; k < K_; ++k) {
                    const int id = L.ptilde(k, i, t);
                    acc(id >= 0 ? x[id] : 0.0,
                        s.psi.ptilde[(static_cast<std::size_t>(t) * NF_ + i) * K_ + k]);
                }
        }
        return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
    }

    Plan repair_exclusivity(const ScaState& state, ScaResult& out) {
        Pins pins = pins_ ? *pins_ : Pins{};
        std::vector<int> owner(static_cast<std::size_t>(NF_) * T_, -1);
        for (int t = 0; t < T_; ++t)
            for (int i = 0; i < NF_; ++i) {
                double best = kAssignThreshold;
                for (int k = 0; k < K_; ++k) {
                    const double pw =
                        state.psi.ptilde[(static_cast<std::size_t>(t) * NF_ + i) * K_ + k];
                    if (pw > best) {
                        best = pw;
                        owner[static_cast<std::size_t>(t) * NF_ + i] = k;
                    }
                }
            }
        pins.assigned_user = owner;
        ScaState fixed = state;
        // Zero the losers in the linearization point.
        for (int t = 0; t < T_; ++t)
            for (int i = 0; i < NF_; ++i)
                for (int k = 0; k < K_; ++k)
                    if (owner[static_cast<std::size_t>(t) * NF_ + i] != k)
                        fixed.psi.ptilde[(static_cast<std::size_t>(t) * NF_ + i) * K_ + k] = 0.0;
        auto wp = build_window_program(sc_, gains_, st_, &pins, nullptr, &fixed.psi);
        auto res = convex::solve_min(wp.prog, 1e-8);
        out.repair_solves += 1;
        if (res.status != convex::SolveStatus::Optimal)
            throw std::runtime_error("sca: exclusivity repair solve failed");
        return extract_plan(sc_, gains_, wp.layout, res.x, n0_, st_);
    }

    const Scenario& sc_;
    GainsView gains_;
    WindowState st_;
    int n0_;
    const Pins* pins_;
    int K_ = 0, NF_ = 0, T_ = 0;
    std::vector<double> history_;
};

inline ScaResult solve_offline_sca(const Scenario& sc, const ChannelTensor& ch,
                                   const Pins* pins = nullptr) {
    ScaSolver solver(sc, offline_gains(sc, ch), initial_state(sc), 1, pins);
    return solver.solve(sc.solver.eps3);
}

inline ScaResult solve_online_sca(const Scenario& sc, const ChannelTensor& ch, int n0,
                                  const WindowState& st, const Pins* pins = nullptr) {
    ScaSolver solver(sc, online_gains(sc, ch, n0), st, n0, pins);
    return solver.solve(sc.solver.eps3);
}

}  // namespace uavopt
