#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "uavopt/scenario.hpp"

namespace uavopt {

// Per-window gains H_bar[k][i][t]; offline uses realized H for every slot,
// online uses realized H at t = 0 and E{H} afterwards.
struct GainsView {
    int K = 0, N_F = 0, T = 0;
    std::vector<double> H;
    double& at(int k, int i, int t) { return H[(static_cast<std::size_t>(t) * N_F + i) * K + k]; }
    double at(int k, int i, int t) const {
        return H[(static_cast<std::size_t>(t) * N_F + i) * K + k];
    }
};

inline GainsView offline_gains(const Scenario& sc, const ChannelTensor& ch) {
    GainsView g;
    g.K = ch.K;
    g.N_F = ch.N_F;
    g.T = ch.N_T;
    g.H.resize(static_cast<std::size_t>(g.K) * g.N_F * g.T);
    for (int t = 0; t < g.T; ++t)
        for (int i = 0; i < g.N_F; ++i)
            for (int k = 0; k < g.K; ++k) g.at(k, i, t) = ch.at(k, i, t);
    return g;
}

// Mixed gains for a re-plan at slot n0 (1-based): realized gains for the
// current slot, statistical means for the future.
inline GainsView online_gains(const Scenario& sc, const ChannelTensor& ch, int n0) {
    GainsView g;
    g.K = ch.K;
    g.N_F = ch.N_F;
    g.T = ch.N_T - (n0 - 1);
    g.H.resize(static_cast<std::size_t>(g.K) * g.N_F * g.T);
    for (int t = 0; t < g.T; ++t)
        for (int i = 0; i < g.N_F; ++i)
            for (int k = 0; k < g.K; ++k)
                g.at(k, i, t) = (t == 0) ? ch.at(k, i, n0 - 1) : ch.mean(k, i);
    return g;
}

// Kinematic/energy state a re-plan starts from.
struct WindowState {
    std::array<double, 3> r_start{0, 0, 0};            // position before the first slot
    std::optional<std::array<double, 3>> v_prev;       // velocity of the previous slot
    double q_start = 0.0;                              // battery at the window start (J)
};

inline WindowState initial_state(const Scenario& sc) {
    WindowState st;
    st.r_start = sc.r_init;
    st.q_start = sc.limits.q0;
    return st;
}

// Structural pins used by the baselines.
struct Pins {
    bool pin_xy = false;                         // x = y = 0, vx = vy = 0
    std::optional<std::vector<double>> pin_z;    // per-slot altitude profile
    // Allowed user per (i, t); -1 blocks the subcarrier entirely. Users not
    // selected get no power variable at all.
    std::optional<std::vector<int>> assigned_user;  // size N_F * T
};

// Index map for the decision vector of one window program.
struct VariableLayout {
    int K = 0, N_F = 0, T = 0;
    bool sca = false;
    const Pins* pins = nullptr;

    int n_vars = 0;
    std::vector<int> ptilde_map;  // K*N_F*T -> var or -1
    int r0 = -1, v0 = -1, vbar0 = -1, q0 = -1, tpow0 = -1, theta0 = -1;
    int mu0 = -1, b0 = -1, l0 = -1, gamma0 = -1, varpi0 = -1;

    int ptilde(int k, int i, int t) const {
        return ptilde_map[(static_cast<std::size_t>(t) * N_F + i) * K + k];
    }
    int rx(int t) const { return r0 + 3 * t; }
    int ry(int t) const { return r0 + 3 * t + 1; }
    int rz(int t) const { return r0 + 3 * t + 2; }
    int vx(int t) const { return v0 + 3 * t; }
    int vy(int t) const { return v0 + 3 * t + 1; }
    int vz(int t) const { return v0 + 3 * t + 2; }
    int vbar(int t) const { return vbar0 + t; }
    int q(int t) const { return q0 + t; }          // t in 0..T
    int tpow(int t) const { return tpow0 + t; }
    int theta(int k, int t) const { return theta0 + t * K + k; }
    int mu(int t) const { return mu0 + t; }
    int b(int t) const { return b0 + t; }
    int l(int t) const { return l0 + t; }
    int gamma(int t) const { return gamma0 + t; }
    int varpi(int t) const { return varpi0 + t; }
};

inline VariableLayout make_layout(int K, int N_F, int T, bool sca, const Pins* pins = nullptr,
                                  const std::vector<std::uint8_t>* active = nullptr) {
    VariableLayout lay;
    lay.K = K;
    lay.N_F = N_F;
    lay.T = T;
    lay.sca = sca;
    lay.pins = pins;
    lay.ptilde_map.assign(static_cast<std::size_t>(K) * N_F * T, -1);
    int next = 0;
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N_F; ++i)
            for (int k = 0; k < K; ++k) {
                if (pins && pins->assigned_user) {
                    const int owner = (*pins->assigned_user)[static_cast<std::size_t>(t) * N_F + i];
                    if (owner != k) continue;
                }
                const std::size_t flat = (static_cast<std::size_t>(t) * N_F + i) * K + k;
                if (active && !(*active)[flat]) continue;
                lay.ptilde_map[flat] = next++;
            }
    lay.r0 = next;
    next += 3 * T;
    lay.v0 = next;
    next += 3 * T;
    lay.vbar0 = next;
    next += T;
    lay.q0 = next;
    next += T + 1;
    lay.tpow0 = next;
    next += T;
    lay.theta0 = next;
    next += K * T;
    if (sca) {
        lay.mu0 = next;
        next += T;
        lay.b0 = next;
        next += T;
        lay.l0 = next;
        next += T;
        lay.gamma0 = next;
        next += T;
        lay.varpi0 = next;
        next += T;
    }
    lay.n_vars = next;
    return lay;
}

// Per-slot altitude reachability window implied by the vertical speed cap.
inline void z_reach(const Scenario& sc, const WindowState& st, int T, std::vector<double>& zlo,
                    std::vector<double>& zhi) {
    zlo.resize(T);
    zhi.resize(T);
    const double step = sc.limits.V_max_z * sc.Delta_T;
    for (int t = 0; t < T; ++t) {
        zlo[t] = std::max(sc.limits.z_min, st.r_start[2] - (t + 1) * step);
        zhi[t] = std::min(sc.limits.z_max, st.r_start[2] + (t + 1) * step);
    }
}

// Smallest squared distance to user k any feasible trajectory can reach by
// slot t (0-based). Floors both theta and the achievable-SINR enclosure.
inline double min_sqdist_reach(const Scenario& sc, const WindowState& st, int k, int t) {
    const double dx = st.r_start[0] - sc.users[k][0];
    const double dy = st.r_start[1] - sc.users[k][1];
    const double horiz =
        std::max(0.0, std::hypot(dx, dy) - (t + 1) * sc.limits.V_max_xy * sc.Delta_T);
    const double z =
        std::max(sc.limits.z_min, st.r_start[2] - (t + 1) * sc.limits.V_max_z * sc.Delta_T);
    return horiz * horiz + z * z;
}

}  // namespace uavopt
