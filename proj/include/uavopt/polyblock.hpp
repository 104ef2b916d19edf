#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavopt/programs.hpp"

namespace uavopt {

// Point of the lifted monotonic space: per-(k,i,n) SINR coordinates chi >= 1
// plus per-slot auxiliaries (level-flight mu, battery-increment varpi, log
// harvest tau).
struct Vertex {
    convex::Vec chi;    // K*N_F*T
    convex::Vec mu;     // T
    convex::Vec varpi;  // T
    convex::Vec tau;    // T
    long id = 0;
    double objective = 0.0;  // sum log2(chi), cached

    int dims() const {
        return static_cast<int>(chi.size() + mu.size() + varpi.size() + tau.size());
    }
    double coord(int j) const {
        if (j < chi.size()) return chi[j];
        j -= static_cast<int>(chi.size());
        if (j < mu.size()) return mu[j];
        j -= static_cast<int>(mu.size());
        if (j < varpi.size()) return varpi[j];
        j -= static_cast<int>(varpi.size());
        return tau[j];
    }
    void set_coord(int j, double v) {
        if (j < chi.size()) {
            chi[j] = v;
            return;
        }
        j -= static_cast<int>(chi.size());
        if (j < mu.size()) {
            mu[j] = v;
            return;
        }
        j -= static_cast<int>(mu.size());
        if (j < varpi.size()) {
            varpi[j] = v;
            return;
        }
        j -= static_cast<int>(varpi.size());
        tau[j] = v;
    }
};

inline double chi_objective(const convex::Vec& chi) {
    double s = 0.0;
    for (int i = 0; i < chi.size(); ++i) s += std::log2(std::max(1.0, chi[i]));
    return s;
}

// C14 restated in chi-space: sum_i log2(chi_k^i[n]) >= R_req_k / B.
inline bool chi_qos_ok(const convex::Vec& chi, const Scenario& sc, int K, int NF, int T) {
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) {
            const double need = sc.R_req(k) / sc.constants.B;
            if (need <= 0.0) continue;
            double have = 0.0;
            for (int i = 0; i < NF; ++i)
                have += std::log2(
                    std::max(1.0, chi[(static_cast<std::size_t>(t) * NF + i) * K + k]));
            if (have < need * (1.0 - 1e-9) - 1e-12) return false;
        }
    return true;
}

struct ConvergenceRecord {
    int iteration = 0;
    double bound = 0.0;      // best enclosing vertex objective (log2 units)
    double incumbent = 0.0;  // best feasible projection objective (log2 units)
    int vertex_count = 0;
};

struct Polyblock {
    std::vector<Vertex> verts;
    long next_id = 0;
    int current = -1;  // index of the vertex being refined
    int iteration = 0;
    double incumbent_obj = -1.0;
    std::optional<Vertex> incumbent_vertex;
    double incumbent_lambda = 0.0;
    convex::Vec incumbent_witness;
    std::vector<ConvergenceRecord> log;
};

struct ProjectionOutcome {
    double lambda = 0.0;
    convex::Vec witness;       // feasible point at lambda (empty if lambda = 0 failed)
    bool base_feasible = true;
    std::string fail_reason;
};

struct PolyblockResult {
    bool feasible = false;
    bool converged = false;
    std::string message;
    Plan plan;
    double bound_log2 = 0.0;      // final enclosing bound, sum log2(chi)
    double incumbent_log2 = 0.0;  // realized incumbent in the same units
    int iterations = 0;
    std::vector<ConvergenceRecord> log;
};

class PolyblockSolver {
public:
    PolyblockSolver(const Scenario& sc, GainsView gains, WindowState st, int n0,
                    const Pins* pins = nullptr)
        : sc_(sc), gains_(std::move(gains)), st_(st), n0_(n0), pins_(pins) {
        K_ = gains_.K;
        NF_ = gains_.N_F;
        T_ = gains_.T;
        const double vh4 = std::pow(sc.derived.V_h, 4.0);
        mu_hover_ = 1.0 / (std::sqrt(2.0) * sc.derived.V_h);
        mu_min_ = 1.0 / std::sqrt(sc.limits.V_max_xy * sc.limits.V_max_xy +
                                  std::sqrt(std::pow(sc.limits.V_max_xy, 4.0) + 4.0 * vh4));
    }

    // Algorithm step 1: single enclosing vertex. The SINR coordinates use the
    // reachable-distance floor: chi <= 1 + H p / theta and theta can never
    // fall below the closest possible approach, so this box still encloses
    // the feasible set while keeping the first projections well-scaled.
    Polyblock init_polyblock() const {
        Vertex v;
        v.chi.resize(static_cast<int>(K_) * NF_ * T_);
        for (int t = 0; t < T_; ++t)
            for (int i = 0; i < NF_; ++i)
                for (int k = 0; k < K_; ++k)
                    v.chi[(static_cast<std::size_t>(t) * NF_ + i) * K_ + k] =
                        1.0 + gains_.at(k, i, t) * sc_.constants.P_max /
                                  min_sqdist_reach(sc_, st_, k, t);
        v.mu = convex::Vec::Constant(T_, mu_hover_);
        const double E = sc_.derived.E_const;
        v.varpi = convex::Vec::Constant(T_, std::isfinite(E) ? std::exp(E) : 0.0);
        v.tau = convex::Vec::Constant(T_, std::isfinite(E) ? E : 0.0);
        v.id = 0;
        v.objective = chi_objective(v.chi);
        Polyblock pb;
        pb.verts.push_back(std::move(v));
        pb.next_id = 1;
        pb.current = 0;
        return pb;
    }

    // Algorithm 2: bisection on the projection parameter with a feasibility
    // solve per probe. The scaled constraints tighten monotonically in
    // lambda, so the feasible lambdas form an interval [0, lambda*].
    ProjectionOutcome project(const Vertex& v, double eps2) const {
        ProjectionOutcome out;
        convex::Vec warm;
        auto feasible = [&](double lam, convex::Vec* witness) {
            ProjectionParams pp;
            pp.chi = std::span<const double>(v.chi.data(), static_cast<std::size_t>(v.chi.size()));
            pp.mu = std::span<const double>(v.mu.data(), static_cast<std::size_t>(v.mu.size()));
            pp.lambda = lam;
            auto wp = build_window_program(sc_, gains_, st_, pins_, &pp, nullptr);
            if (wp.const_infeasible) return false;
            auto res = convex::solve_feasibility(wp.prog, 1e-9,
                                                 warm.size() ? &warm : nullptr);
            if (res.status == convex::SolveStatus::Feasible) {
                warm = res.x;
                if (witness) *witness = res.x;
                return true;
            }
            if (lam == 0.0) out.fail_reason = res.worst_constraint;
            return false;
        };

        if (feasible(1.0, &out.witness)) {
            out.lambda = 1.0;
            return out;
        }
        if (!feasible(0.0, &out.witness)) {
            out.base_feasible = false;
            out.lambda = 0.0;
            return out;
        }
        double lo = 0.0, hi = 1.0;
        while (hi - lo > eps2) {
            const double mid = 0.5 * (lo + hi);
            convex::Vec w;
            if (feasible(mid, &w)) {
                lo = mid;
                out.witness = std::move(w);
            } else {
                hi = mid;
            }
        }
        // Refine multiplicatively when the feasible scale sits below the
        // absolute bracket resolution.
        if (lo == 0.0) {
            double g = hi;
            for (int it = 0; it < 60 && lo == 0.0 && g > 1e-13; ++it) {
                g /= 16.0;
                convex::Vec w;
                if (feasible(g, &w)) {
                    lo = g;
                    out.witness = std::move(w);
                }
            }
            if (lo > 0.0) {
                double hi2 = std::min(hi, lo * 16.0);
                while (hi2 - lo > eps2 * hi2) {
                    const double mid = 0.5 * (lo + hi2);
                    convex::Vec w;
                    if (feasible(mid, &w)) {
                        lo = mid;
                        out.witness = std::move(w);
                    } else {
                        hi2 = mid;
                    }
                }
            }
        }
        out.lambda = lo;
        return out;
    }

    // One outer iteration. Returns true when converged.
    bool iterate(Polyblock& pb, double eps1, double eps2, int vertex_cap) {
        if (pb.current < 0) throw std::logic_error("polyblock: no selectable vertex");
        Vertex v = pb.verts[static_cast<std::size_t>(pb.current)];
        auto proj = project(v, eps2);
        if (!proj.base_feasible)
            throw std::runtime_error("polyblock: scenario infeasible (" + proj.fail_reason + ")");
        pb.iteration += 1;

        // Incumbent update: the scaled point is feasible; keep it when it
        // clears the chi-space QoS filter.
        if (proj.lambda > 0.0) {
            convex::Vec chi_s = v.chi * proj.lambda;
            if (chi_qos_ok(chi_s, sc_, K_, NF_, T_)) {
                const double obj = chi_objective(chi_s);
                if (obj > pb.incumbent_obj) {
                    pb.incumbent_obj = obj;
                    pb.incumbent_vertex = v;
                    pb.incumbent_lambda = proj.lambda;
                    pb.incumbent_witness = proj.witness;
                }
            }
        }

        const double gap = 1.0 - proj.lambda;  // ||v - lambda v|| / ||v||
        if (gap <= eps1) {
            pb.log.push_back({pb.iteration, v.objective, pb.incumbent_obj,
                              static_cast<int>(pb.verts.size())});
            return true;
        }

        // Children: one reduced coordinate each.
        std::vector<Vertex> children;
        children.reserve(static_cast<std::size_t>(v.dims()));
        for (int j = 0; j < v.dims(); ++j) {
            Vertex c = v;
            double nv = proj.lambda * v.coord(j);
            if (j < c.chi.size()) nv = std::max(1.0, nv);
            else if (j < c.chi.size() + c.mu.size())
                nv = std::max(mu_min_, nv);
            c.set_coord(j, nv);
            c.id = pb.next_id++;
            c.objective = chi_objective(c.chi);
            children.push_back(std::move(c));
        }
        pb.verts.erase(pb.verts.begin() + pb.current);
        for (auto& c : children) pb.verts.push_back(std::move(c));

        prune(pb);
        if (static_cast<int>(pb.verts.size()) > vertex_cap)
            throw std::runtime_error("polyblock: vertex cap exceeded (" +
                                     std::to_string(pb.verts.size()) + ")");

        // Step 7: best remaining vertex inside the conormal filter.
        pb.current = select(pb);
        if (pb.current < 0) return true;  // nothing selectable: QoS-infeasible region
        pb.log.push_back({pb.iteration, pb.verts[static_cast<std::size_t>(pb.current)].objective,
                          pb.incumbent_obj, static_cast<int>(pb.verts.size())});
        return false;
    }

    PolyblockResult solve(double eps1, double eps2, int vertex_cap, int max_iters) {
        PolyblockResult out;
        Polyblock pb = init_polyblock();
        pb.current = select(pb);
        if (pb.current < 0) {
            out.message = "QoS requirements unattainable in chi space";
            return out;
        }
        bool converged = false;
        for (int it = 0; it < max_iters && !converged; ++it)
            converged = iterate(pb, eps1, eps2, vertex_cap);
        out.iterations = pb.iteration;
        out.converged = converged;
        out.log = pb.log;
        double bound = pb.incumbent_obj;
        for (const auto& v : pb.verts)
            if (chi_qos_ok(v.chi, sc_, K_, NF_, T_)) bound = std::max(bound, v.objective);
        out.bound_log2 = bound;
        if (!pb.incumbent_vertex) {
            out.message = converged ? "no feasible incumbent found" : "iteration cap reached";
            return out;
        }
        out.incumbent_log2 = pb.incumbent_obj;
        out.plan = finalize(*pb.incumbent_vertex, pb.incumbent_lambda, pb.incumbent_witness);
        out.feasible = true;
        if (!converged) out.message = "iteration cap reached; incumbent returned";
        return out;
    }

    const VariableLayout& last_layout() const { return layout_; }

private:
    // Conservative final resolve: charge the full hover-level power so the
    // executed plan satisfies the true energy constraints at any speed.
    Plan finalize(const Vertex& v, double lambda, const convex::Vec& witness) {
        double lam = lambda;
        for (int attempt = 0; attempt < 25; ++attempt) {
            ProjectionParams pp;
            pp.chi = std::span<const double>(v.chi.data(), static_cast<std::size_t>(v.chi.size()));
            pp.mu = std::span<const double>(v.mu.data(), static_cast<std::size_t>(v.mu.size()));
            pp.lambda = lam;
            pp.mu_charge = mu_hover_;
            pp.finalize_exclusive = true;
            auto wp = build_window_program(sc_, gains_, st_, pins_, &pp, nullptr);
            auto res = convex::solve_feasibility(wp.prog, 1e-9,
                                                 witness.size() ? &witness : nullptr);
            if (res.status == convex::SolveStatus::Feasible) {
                layout_ = wp.layout;
                return extract_plan(sc_, gains_, wp.layout, res.x, n0_, st_);
            }
            lam *= 0.97;
        }
        throw std::runtime_error("polyblock: conservative resolve failed");
    }

    void prune(Polyblock& pb) const {
        // Drop vertices below the incumbent objective and vertices
        // elementwise dominated by another (keeping the older of ties).
        std::vector<Vertex>& vs = pb.verts;
        std::vector<bool> dead(vs.size(), false);
        for (std::size_t a = 0; a < vs.size(); ++a)
            if (pb.incumbent_obj >= 0.0 && vs[a].objective <= pb.incumbent_obj + 1e-12)
                dead[a] = true;
        for (std::size_t a = 0; a < vs.size(); ++a) {
            if (dead[a]) continue;
            for (std::size_t b = 0; b < vs.size(); ++b) {
                if (a == b || dead[b]) continue;
                bool le = true, lt = false;
                for (int j = 0; j < vs[a].dims(); ++j) {
                    const double da = vs[a].coord(j), db = vs[b].coord(j);
                    if (da > db + 1e-12) {
                        le = false;
                        break;
                    }
                    if (da < db - 1e-12) lt = true;
                }
                if (le && (lt || vs[a].id > vs[b].id)) {
                    dead[a] = true;
                    break;
                }
            }
        }
        std::vector<Vertex> keep;
        keep.reserve(vs.size());
        for (std::size_t a = 0; a < vs.size(); ++a)
            if (!dead[a]) keep.push_back(std::move(vs[a]));
        vs = std::move(keep);
    }

    int select(const Polyblock& pb) const {
        int best = -1;
        for (std::size_t i = 0; i < pb.verts.size(); ++i) {
            const Vertex& v = pb.verts[i];
            if (!chi_qos_ok(v.chi, sc_, K_, NF_, T_)) continue;
            if (best < 0 || v.objective > pb.verts[static_cast<std::size_t>(best)].objective +
                                              1e-15 ||
                (std::abs(v.objective - pb.verts[static_cast<std::size_t>(best)].objective) <=
                     1e-15 &&
                 v.id < pb.verts[static_cast<std::size_t>(best)].id))
                best = static_cast<int>(i);
        }
        return best;
    }

    const Scenario& sc_;
    GainsView gains_;
    WindowState st_;
    int n0_;
    const Pins* pins_;
    int K_ = 0, NF_ = 0, T_ = 0;
    double mu_hover_ = 0.0, mu_min_ = 0.0;
    VariableLayout layout_;
};

// Offline benchmark: non-causal gains over the full horizon.
inline PolyblockResult solve_offline_polyblock(const Scenario& sc, const ChannelTensor& ch,
                                               const Pins* pins = nullptr) {
    PolyblockSolver solver(sc, offline_gains(sc, ch), initial_state(sc), 1, pins);
    return solver.solve(sc.solver.eps1, sc.solver.eps2, sc.solver.vertex_cap,
                        sc.solver.max_outer_iters);
}

// Optimal online re-plan from slot n0 with mixed realized/expected gains.
inline PolyblockResult solve_online_optimal(const Scenario& sc, const ChannelTensor& ch, int n0,
                                            const WindowState& st) {
    PolyblockSolver solver(sc, online_gains(sc, ch, n0), st, n0);
    return solver.solve(sc.solver.eps1, sc.solver.eps2, sc.solver.vertex_cap,
                        sc.solver.max_outer_iters);
}

}  // namespace uavopt
