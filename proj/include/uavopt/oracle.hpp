#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "uavopt/physics.hpp"
#include "uavopt/plan.hpp"
#include "uavopt/rate_model.hpp"
#include "uavopt/scenario.hpp"

namespace uavopt {

// Exhaustive search over discretized controls. Enumerates per-slot velocity,
// per-subcarrier owner and power level, checks every constraint of the
// planning problem (bound-harvest battery model), and returns the best plan.
// Desk-scale verification harness; complexity is exponential in N_T.
struct OracleGrids {
    int n_power = 5;   // power levels per subcarrier in [0, P_max]
    int n_vxy = 3;     // per-axis horizontal velocity levels in [-V, V]
    int n_vz = 3;      // vertical velocity levels in [-Vz, Vz]
    std::int64_t max_evals = 10'000'000;
};

struct OracleResult {
    bool feasible = false;
    double objective_bps = 0.0;
    Plan plan;
    std::int64_t evals = 0;
};

namespace oracle_detail {

struct Action {
    std::array<double, 3> v;
    std::vector<int> owner;      // per subcarrier, -1 = idle
    std::vector<double> power;   // per subcarrier (W)
};

struct Searcher {
    const Scenario& sc;
    const ChannelTensor& ch;
    const OracleGrids& grids;
    std::vector<Action> actions;
    std::int64_t evals = 0;
    double best = -1.0;
    std::vector<int> best_seq;
    std::vector<int> seq;
    double rate_cap_per_slot = 0.0;

    double slot_rate(const Action& a, const std::array<double, 3>& r, int n,
                     std::vector<double>& per_user) const {
        std::fill(per_user.begin(), per_user.end(), 0.0);
        double total = 0.0;
        for (int i = 0; i < sc.constants.N_F; ++i) {
            if (a.owner[i] < 0 || a.power[i] <= 0.0) continue;
            const double rr =
                rate(a.power[i], ch.at(a.owner[i], i, n), r, sc.users[a.owner[i]], sc.constants.B);
            per_user[a.owner[i]] += rr;
            total += rr;
        }
        return total;
    }

    void dfs(int t, std::array<double, 3> r, const std::array<double, 3>* v_prev, double q,
             double acc, std::vector<double>& per_user) {
        if (t == sc.N_T) {
            if (q >= sc.limits.q_end - 1e-9 && acc > best) {
                best = acc;
                best_seq = seq;
            }
            return;
        }
        // optimistic bound prune
        if (best >= 0.0 && acc + (sc.N_T - t) * rate_cap_per_slot <= best) return;
        for (std::size_t ai = 0; ai < actions.size(); ++ai) {
            const Action& a = actions[ai];
            if (v_prev) {
                const double dx = a.v[0] - (*v_prev)[0];
                const double dy = a.v[1] - (*v_prev)[1];
                const double dz = a.v[2] - (*v_prev)[2];
                if (std::sqrt(dx * dx + dy * dy + dz * dz) >
                    sc.limits.a_max * sc.Delta_T + 1e-12)
                    continue;
            }
            std::array<double, 3> rn{r[0] + a.v[0] * sc.Delta_T, r[1] + a.v[1] * sc.Delta_T,
                                     r[2] + a.v[2] * sc.Delta_T};
            if (rn[2] < sc.limits.z_min - 1e-9 || rn[2] > sc.limits.z_max + 1e-9) continue;

            double ptot = 0.0;
            for (int i = 0; i < sc.constants.N_F; ++i) ptot += a.power[i];
            const double consumed = ptot / sc.constants.eps_pa + aero_power(a.v, sc.derived) +
                                    sc.constants.P_static;
            if (consumed * sc.Delta_T > q + 1e-9) continue;  // C1

            if (++evals > grids.max_evals)
                throw std::runtime_error("oracle: state-action budget exceeded");

            const double total = slot_rate(a, rn, t, per_user);
            bool qos = true;
            for (int k = 0; k < sc.K(); ++k)
                if (per_user[k] < sc.R_req(k) - 1e-9) {
                    qos = false;
                    break;
                }
            if (!qos) continue;

            const double harvest = solar_power_bound(rn[2], sc.derived, sc.solar);
            const double qn = std::min(sc.limits.q_max, q + (harvest - consumed) * sc.Delta_T);
            if (qn < -1e-9) continue;

            seq.push_back(static_cast<int>(ai));
            dfs(t + 1, rn, &a.v, qn, acc + total, per_user);
            seq.pop_back();
        }
    }
};

}  // namespace oracle_detail

inline OracleResult oracle_search(const Scenario& sc, const ChannelTensor& ch,
                                  const OracleGrids& grids = OracleGrids{}) {
    using oracle_detail::Action;
    const int K = sc.K(), NF = sc.constants.N_F;
    if (grids.n_power < 2) throw std::invalid_argument("oracle: n_power must be >= 2");

    std::vector<double> vx_levels, vz_levels, p_levels;
    for (int i = 0; i < grids.n_vxy; ++i)
        vx_levels.push_back(grids.n_vxy == 1 ? 0.0
                                             : -sc.limits.V_max_xy +
                                                   2.0 * sc.limits.V_max_xy * i /
                                                       (grids.n_vxy - 1));
    for (int i = 0; i < grids.n_vz; ++i)
        vz_levels.push_back(grids.n_vz == 1 ? 0.0
                                            : -sc.limits.V_max_z +
                                                  2.0 * sc.limits.V_max_z * i / (grids.n_vz - 1));
    for (int i = 0; i < grids.n_power; ++i)
        p_levels.push_back(sc.constants.P_max * i / (grids.n_power - 1));

    // Per-subcarrier choices: (owner, level) pairs with owner = -1 only for
    // the zero level.
    struct SubChoice {
        int owner;
        double power;
    };
    std::vector<SubChoice> sub;
    sub.push_back({-1, 0.0});
    for (int k = 0; k < K; ++k)
        for (std::size_t li = 1; li < p_levels.size(); ++li) sub.push_back({k, p_levels[li]});

    std::vector<Action> actions;
    std::vector<int> pick(NF, 0);
    while (true) {
        double ptot = 0.0;
        for (int i = 0; i < NF; ++i) ptot += sub[pick[i]].power;
        if (ptot <= sc.constants.P_max + 1e-12) {
            for (double vx : vx_levels)
                for (double vy : vx_levels) {
                    if (std::hypot(vx, vy) > sc.limits.V_max_xy + 1e-12) continue;
                    for (double vz : vz_levels) {
                        Action a;
                        a.v = {vx, vy, vz};
                        a.owner.resize(NF);
                        a.power.resize(NF);
                        for (int i = 0; i < NF; ++i) {
                            a.owner[i] = sub[pick[i]].owner;
                            a.power[i] = sub[pick[i]].power;
                        }
                        actions.push_back(std::move(a));
                    }
                }
        }
        int pos = 0;
        while (pos < NF && ++pick[pos] == static_cast<int>(sub.size())) pick[pos++] = 0;
        if (pos == NF) break;
    }

    const std::int64_t space =
        static_cast<std::int64_t>(actions.size()) * static_cast<std::int64_t>(
            std::pow(static_cast<double>(actions.size()), sc.N_T - 1));
    if (space > grids.max_evals * 64)
        throw std::runtime_error("oracle: discretized state-action space exceeds the cap");

    oracle_detail::Searcher s{sc, ch, grids};
    s.actions = std::move(actions);
    // Per-slot optimistic rate bound: all subcarriers at P_max to the best
    // gain at the closest possible approach.
    double hmax = 0.0;
    for (double h : ch.H) hmax = std::max(hmax, h);
    s.rate_cap_per_slot = NF * sc.constants.B *
                          std::log2(1.0 + hmax * sc.constants.P_max /
                                              (sc.limits.z_min * sc.limits.z_min));

    std::vector<double> per_user(K, 0.0);
    s.dfs(0, sc.r_init, nullptr, sc.limits.q0, 0.0, per_user);

    OracleResult out;
    out.evals = s.evals;
    if (s.best < 0.0) return out;
    out.feasible = true;
    out.objective_bps = s.best;
    out.plan.resize(1, sc.N_T, K, NF);
    std::array<double, 3> r = sc.r_init;
    double q = sc.limits.q0;
    out.plan.q[0] = q;
    for (int t = 0; t < sc.N_T; ++t) {
        const Action& a = s.actions[static_cast<std::size_t>(s.best_seq[t])];
        for (int c = 0; c < 3; ++c) r[c] += a.v[c] * sc.Delta_T;
        out.plan.v[t] = a.v;
        out.plan.r[t] = r;
        double ptot = 0.0;
        for (int i = 0; i < NF; ++i) {
            if (a.owner[i] >= 0 && a.power[i] > 0.0) {
                out.plan.ptilde[out.plan.pidx(a.owner[i], i, t)] = a.power[i];
                out.plan.assignment[out.plan.pidx(a.owner[i], i, t)] = 1;
            }
            ptot += a.power[i];
        }
        for (int k = 0; k < K; ++k)
            out.plan.theta[static_cast<std::size_t>(t) * K + k] = sqdist(r, sc.users[k]);
        const double consumed = ptot / sc.constants.eps_pa + aero_power(a.v, sc.derived) +
                                sc.constants.P_static;
        out.plan.t[t] = consumed;
        q = std::min(sc.limits.q_max,
                     q + (solar_power_bound(r[2], sc.derived, sc.solar) - consumed) * sc.Delta_T);
        out.plan.q[t + 1] = q;
    }
    out.plan.objective_bps = s.best;
    return out;
}

}  // namespace uavopt
