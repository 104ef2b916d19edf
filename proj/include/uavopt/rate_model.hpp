#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "uavopt/plan.hpp"
#include "uavopt/scenario.hpp"

namespace uavopt {

constexpr double kAssignThreshold = 1e-9;  // W; powers below never carry rate

inline double sqdist(const std::array<double, 3>& r, const std::array<double, 2>& user) {
    const double dx = r[0] - user[0];
    const double dy = r[1] - user[1];
    const double dz = r[2];
    return dx * dx + dy * dy + dz * dz;
}

// Achievable rate B log2(1 + H p / ||r - r_k||^2) in bit/s.
inline double rate(double p, double H_eff, const std::array<double, 3>& r,
                   const std::array<double, 2>& user, double B) {
    const double d2 = sqdist(r, user);
    return B * std::log2(1.0 + H_eff * p / d2);
}

// Penalized per-user rate on one subcarrier, Eq.-style
// B log2(1 + H_k p~_k / (xi sum_{j != k} H_k p~_j + theta_k)).
// Interference is weighted by the victim's own gain H_k.
inline double penalized_rate(std::span<const double> ptilde_row, int k, double H_k, double theta_k,
                             double xi, double B) {
    double interf = 0.0;
    for (std::size_t j = 0; j < ptilde_row.size(); ++j)
        if (static_cast<int>(j) != k) interf += H_k * ptilde_row[j];
    return B * std::log2(1.0 + H_k * ptilde_row[static_cast<std::size_t>(k)] /
                                   (xi * interf + theta_k));
}

// Upper bound on the expected rate using E{H} (Jensen direction).
inline double expected_rate_upper(double p, double EH, const std::array<double, 3>& r,
                                  const std::array<double, 2>& user, double B) {
    return rate(p, EH, r, user, B);
}

struct ExclusivityViolation {
    int i = -1, n = -1;  // subcarrier / local slot of the first violation
    int users = 0;       // active users found there
};

// Recovers s from p~ by thresholding; at most one active user per (i, n).
// Returns true on success; on failure fills `viol` when provided.
inline bool recover_assignment(Plan& plan, double tau_p = kAssignThreshold,
                               ExclusivityViolation* viol = nullptr) {
    bool ok = true;
    for (int t = 0; t < plan.T; ++t) {
        for (int i = 0; i < plan.N_F; ++i) {
            int active = 0;
            for (int k = 0; k < plan.K; ++k) {
                const bool on = plan.ptilde[plan.pidx(k, i, t)] > tau_p;
                plan.assignment[plan.pidx(k, i, t)] = on ? 1 : 0;
                active += on ? 1 : 0;
            }
            if (active > 1 && ok) {
                ok = false;
                if (viol) *viol = {i, t, active};
            }
        }
    }
    return ok;
}

// Per (k, local slot) table: sum_i s * rate >= R_req_k.
inline std::vector<std::vector<bool>> qos_satisfied(const Plan& plan, const Scenario& sc,
                                                    const ChannelTensor& ch) {
    std::vector<std::vector<bool>> table(plan.K, std::vector<bool>(plan.T, false));
    for (int t = 0; t < plan.T; ++t) {
        const int n = plan.n0 - 1 + t;  // 0-based scenario slot
        for (int k = 0; k < plan.K; ++k) {
            double sum = 0.0;
            for (int i = 0; i < plan.N_F; ++i)
                if (plan.s(k, i, t))
                    sum += rate(plan.p(k, i, t), ch.at(k, i, n), plan.r[t], sc.users[k],
                                sc.constants.B);
            table[k][t] = sum >= sc.R_req(k) - 1e-9 * (1.0 + sc.R_req(k));
        }
    }
    return table;
}

// True realized sum rate of a plan against a channel tensor (bit/s summed
// over slots, users, subcarriers).
inline double plan_sum_rate(const Plan& plan, const Scenario& sc, const ChannelTensor& ch) {
    double total = 0.0;
    for (int t = 0; t < plan.T; ++t) {
        const int n = plan.n0 - 1 + t;
        for (int i = 0; i < plan.N_F; ++i)
            for (int k = 0; k < plan.K; ++k)
                if (plan.s(k, i, t))
                    total += rate(plan.p(k, i, t), ch.at(k, i, n), plan.r[t], sc.users[k],
                                  sc.constants.B);
    }
    return total;
}

}  // namespace uavopt
