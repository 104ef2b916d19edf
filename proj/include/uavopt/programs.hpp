#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "uavopt/convex.hpp"
#include "uavopt/layout.hpp"
#include "uavopt/physics.hpp"
#include "uavopt/rate_model.hpp"

namespace uavopt {

constexpr double kNormEps = 1e-9;  // smoothing for norm constraints

// ---------------------------------------------------------------------------
// Concave over-estimator of the harvest sigmoid on a per-slot altitude window.
// Keeps the battery-increment cap convex while never under-crediting the
// search (plans are re-audited against the true bound afterwards).
// ---------------------------------------------------------------------------
struct HarvestEnv {
    enum Mode { CONST, CHORD, SIGMOID, SPLICE } mode = CONST;
    double a = 0.0, c = 0.0;  // chord/line a z + c
    double z_t = 0.0;         // splice tangency point
    double smax = 0.0;        // constant mode value

    double value(double kc, double alpha, double z) const {
        switch (mode) {
            case CONST: return smax;
            case CHORD: return a * z + c;
            case SIGMOID: return convex::sigmoid(kc * (z - alpha));
            case SPLICE:
                if (z <= z_t) return a * z + c;
                return convex::sigmoid(kc * (z - alpha));
        }
        return smax;
    }
};

inline HarvestEnv harvest_envelope(double kc, double alpha, double zlo, double zhi) {
    auto s = [&](double z) { return convex::sigmoid(kc * (z - alpha)); };
    auto sp = [&](double z) {
        const double v = s(z);
        return kc * v * (1.0 - v);
    };
    HarvestEnv env;
    if (zhi - zlo < 1e-9) {
        env.mode = HarvestEnv::CONST;
        env.smax = s(zhi);
        return env;
    }
    if (zlo >= alpha) {
        env.mode = HarvestEnv::SIGMOID;
        return env;
    }
    if (zhi <= alpha) {
        env.mode = HarvestEnv::CHORD;
        env.a = (s(zhi) - s(zlo)) / (zhi - zlo);
        env.c = s(zlo) - env.a * zlo;
        return env;
    }
    // Window straddles the inflection: tangent from (zlo, s(zlo)) onto the
    // concave branch, then the sigmoid itself.
    auto g = [&](double zt) { return s(zt) + sp(zt) * (zlo - zt) - s(zlo); };
    if (g(zhi) < 0.0) {
        env.mode = HarvestEnv::CONST;
        env.smax = s(zhi);
        return env;
    }
    double a = alpha, b = zhi;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (a + b);
        (g(mid) >= 0.0 ? b : a) = mid;
    }
    env.mode = HarvestEnv::SPLICE;
    env.z_t = b;
    env.a = sp(b);
    env.c = s(b) - env.a * b;
    return env;
}

namespace detail_terms {

// Squared distance to a user minus the theta bound, row-scaled.
class ScaledQuadTerm : public convex::QuadMinusVarTerm {
public:
    ScaledQuadTerm(std::string n, std::vector<int> i, convex::Vec o, int j, double w)
        : QuadMinusVarTerm(std::move(n), std::move(i), std::move(o), j), w_(w) {}
    double eval(const double* x, double* g, double* h) const override {
        const double v = QuadMinusVarTerm::eval(x, g, h);
        if (g)
            for (int i = 0; i < nloc(); ++i) g[i] *= w_;
        if (h)
            for (int i = 0; i < nloc() * nloc(); ++i) h[i] *= w_;
        return v * w_;
    }

private:
    double w_;
};

// increment(q_next, q_cur, tpow) - C1 dT * env(z) <= 0, scaled by `w`.
class HarvestCapTerm : public convex::Term {
public:
    HarvestCapTerm(std::string name, std::vector<int> idx, double dT, double C2dT, double capC1dT,
                   double kc, double alpha, HarvestEnv env, double w)
        : Term(std::move(name), std::move(idx)),
          dT_(dT),
          C2dT_(C2dT),
          cap_(capC1dT),
          kc_(kc),
          alpha_(alpha),
          env_(env),
          w_(w) {}

    // locals: [q_next, q_cur, tpow, z]
    double eval(const double* x, double* grad, double* hess) const override {
        const double z = x[3];
        const double inc = x[0] - x[1] + dT_ * x[2] - C2dT_;
        const double v = w_ * (inc - cap_ * env_.value(kc_, alpha_, z));
        if (grad) {
            grad[0] = w_;
            grad[1] = -w_;
            grad[2] = w_ * dT_;
            grad[3] = -w_ * cap_ * dvalue(z);
        }
        if (hess) {
            std::fill(hess, hess + 16, 0.0);
            hess[15] = -w_ * cap_ * d2value(z);
        }
        return v;
    }

private:
    double dvalue(double z) const {
        switch (env_.mode) {
            case HarvestEnv::CONST: return 0.0;
            case HarvestEnv::CHORD: return env_.a;
            case HarvestEnv::SIGMOID: break;
            case HarvestEnv::SPLICE:
                if (z <= env_.z_t) return env_.a;
                break;
        }
        const double s = convex::sigmoid(kc_ * (z - alpha_));
        return kc_ * s * (1.0 - s);
    }
    double d2value(double z) const {
        switch (env_.mode) {
            case HarvestEnv::CONST: return 0.0;
            case HarvestEnv::CHORD: return 0.0;
            case HarvestEnv::SIGMOID: break;
            case HarvestEnv::SPLICE:
                if (z <= env_.z_t) return 0.0;
                break;
        }
        const double s = convex::sigmoid(kc_ * (z - alpha_));
        return kc_ * kc_ * s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    double dT_, C2dT_, cap_, kc_, alpha_;
    HarvestEnv env_;
    double w_;
};

}  // namespace detail_terms

// Vertex-dependent data for the bisection feasibility program.
struct ProjectionParams {
    std::span<const double> chi;  // K*N_F*T lifted SINR coordinates
    std::span<const double> mu;   // T level-power coordinates
    double lambda = 1.0;
    double mu_charge = -1.0;  // >= 0 replaces lambda*mu[t] (conservative resolve)
    // Final-plan extraction: give each subcarrier to its largest claim and
    // remove every other power variable, so the recovered assignment is
    // exclusive by construction. Claims at the floor carry no rate, so the
    // pinning costs nothing.
    bool finalize_exclusive = false;
};

// Linearization point for one SCA subproblem.
struct ScaPoint {
    std::vector<double> ptilde;  // dense K*N_F*T (masked entries zero)
    std::vector<double> theta;   // K*T
    std::vector<double> vx, vy;  // T
    std::vector<double> l;       // T
    std::vector<double> varpi;   // T
};

struct WindowProgram {
    convex::Program prog;
    VariableLayout layout;
    std::vector<HarvestEnv> harvest;  // per slot
    bool feasible_check_only = true;
    // Two strong C19 rows on one subcarrier are mutually inconsistent for any
    // positive theta; detected in closed form without a solve.
    bool const_infeasible = false;
    std::string const_reason;
};

// chi claims this close to 1 carry no measurable rate; their rows are
// dropped and, under a strong claim, competing powers are pinned to zero
// (a strictly better witness always exists with them at zero).
constexpr double kChiRowFloor = 1e-6;
constexpr double kChiRowStrong = 1e-2;

// Builds the smooth convex window program shared by the projection
// feasibility solve (proj != nullptr) and the SCA subproblem
// (sca != nullptr). Exactly one of proj/sca must be set.
inline WindowProgram build_window_program(const Scenario& sc, const GainsView& gains,
                                          const WindowState& st, const Pins* pins,
                                          const ProjectionParams* proj, const ScaPoint* sca) {
    using namespace convex;
    if ((proj != nullptr) == (sca != nullptr))
        throw std::invalid_argument("build_window_program: need exactly one of proj/sca");

    const int K = gains.K, NF = gains.N_F, T = gains.T;
    const auto& lim = sc.limits;
    const auto& der = sc.derived;
    const double dT = sc.Delta_T;
    const double eps_inv = 1.0 / sc.constants.eps_pa;
    const double mu_hover = 1.0 / (std::sqrt(2.0) * der.V_h);
    const double vh4 = der.V_h * der.V_h * der.V_h * der.V_h;
    const double mu_min = 1.0 / std::sqrt(lim.V_max_xy * lim.V_max_xy +
                                          std::sqrt(std::pow(lim.V_max_xy, 4.0) + 4.0 * vh4));

    WindowProgram wp;
    wp.feasible_check_only = proj != nullptr;

    // Exclusivity pre-pass for the projection program: claims scaled past the
    // strong threshold force every competing power on that subcarrier to
    // zero; two strong claims cannot coexist (theta >= z_min^2 > 0).
    std::vector<std::uint8_t> active;
    if (proj && (K > 1 || proj->finalize_exclusive)) {
        active.assign(static_cast<std::size_t>(K) * NF * T, 1);
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < NF; ++i) {
                int strong = -1, present = 0, winner = -1;
                double mbest = -1.0;
                for (int k = 0; k < K; ++k) {
                    const double m =
                        proj->lambda *
                            proj->chi[(static_cast<std::size_t>(t) * NF + i) * K + k] -
                        1.0;
                    if (m > mbest) {
                        mbest = m;
                        winner = k;
                    }
                    if (m > kChiRowFloor) ++present;
                    if (m > kChiRowStrong) strong = k;
                }
                if (strong >= 0) {
                    if (present >= 2) {
                        // The strong claim zeroes competing powers, which in
                        // turn starves any other above-floor claim.
                        wp.const_infeasible = true;
                        wp.const_reason = "C19 exclusivity conflict";
                        return wp;
                    }
                    for (int k = 0; k < K; ++k)
                        if (k != strong)
                            active[(static_cast<std::size_t>(t) * NF + i) * K + k] = 0;
                } else if (proj->finalize_exclusive) {
                    for (int k = 0; k < K; ++k)
                        if (k != winner || mbest <= kChiRowFloor)
                            active[(static_cast<std::size_t>(t) * NF + i) * K + k] = 0;
                }
            }
    }

    wp.layout = make_layout(K, NF, T, sca != nullptr, pins, active.empty() ? nullptr : &active);
    const VariableLayout& L = wp.layout;
    Program& p = wp.prog;
    p.init(L.n_vars);

    std::vector<double> zlo, zhi;
    z_reach(sc, st, T, zlo, zhi);
    const bool zpin = pins && pins->pin_z.has_value();

    // -------------------- boxes, scales, and seed point --------------------
    const double xy_reach = std::hypot(st.r_start[0], st.r_start[1]) +
                            (T + 1) * lim.V_max_xy * dT + 1.0;
    double max_user = 1.0;
    for (const auto& u : sc.users) max_user = std::max(max_user, std::hypot(u[0], u[1]));
    const double theta_hi = 1.5 * ((xy_reach + max_user) * (xy_reach + max_user) +
                                   lim.z_max * lim.z_max) + 1.0;
    const double hover_power = der.rho1 / std::sqrt(std::sqrt(4.0 * vh4));
    const double t_cap = sc.constants.P_max * eps_inv + der.rho1 * mu_hover +
                         der.W_weight * lim.V_max_z +
                         der.rho2 * std::pow(lim.V_max_xy, 3.0) + sc.constants.P_static + 25.0;
    const double t_floor = -der.W_weight * lim.V_max_z * 1.5 - 25.0;
    const double C1dT = der.C1 * dT;
    const double varpi_lo = std::max(C1dT * 1e-8, 1e-12);
    const double varpi_hi = std::max(C1dT * 1.05, varpi_lo * 10.0);

    const double p_hi = std::max(sc.constants.P_max, 1e-9);
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < NF; ++i)
            for (int k = 0; k < K; ++k) {
                const int id = L.ptilde(k, i, t);
                if (id < 0) continue;
                p.lo[id] = 0.0;
                p.hi[id] = p_hi;
                p.scale[id] = std::max(p_hi / 4.0, 1e-3);
                double seed = std::min(1e-3, 0.01 * p_hi);
                if (sca)
                    seed = sca->ptilde[(static_cast<std::size_t>(t) * NF + i) * K + k];
                p.x_init[id] = std::clamp(seed, std::min(1e-6, 0.01 * p_hi),
                                          p_hi * (1.0 - 1e-9));
            }
        const bool xpin = pins && pins->pin_xy;
        p.lo[L.rx(t)] = xpin ? -std::numeric_limits<double>::infinity() : -xy_reach;
        p.hi[L.rx(t)] = xpin ? std::numeric_limits<double>::infinity() : xy_reach;
        p.lo[L.ry(t)] = p.lo[L.rx(t)];
        p.hi[L.ry(t)] = p.hi[L.rx(t)];
        p.scale[L.rx(t)] = p.scale[L.ry(t)] = std::max(xy_reach / 2.0, 10.0);
        if (zpin) {
            p.lo[L.rz(t)] = -std::numeric_limits<double>::infinity();
            p.hi[L.rz(t)] = std::numeric_limits<double>::infinity();
        } else {
            p.lo[L.rz(t)] = zlo[t];
            p.hi[L.rz(t)] = zhi[t];
        }
        p.scale[L.rz(t)] = std::max(lim.z_max / 4.0, 10.0);
        p.x_init[L.rx(t)] = st.r_start[0];
        p.x_init[L.ry(t)] = st.r_start[1];

        for (int c = 0; c < 3; ++c) {
            const int vi = L.v0 + 3 * t + c;
            const double cap = (c == 2) ? lim.V_max_z : lim.V_max_xy;
            p.lo[vi] = (zpin && c == 2) ? -std::numeric_limits<double>::infinity() : -cap;
            p.hi[vi] = (zpin && c == 2) ? std::numeric_limits<double>::infinity() : cap;
            p.scale[vi] = std::max(cap, 1.0);
            p.x_init[vi] = 0.0;
        }
        if (zpin) {
            p.x_init[L.rz(t)] = (*pins->pin_z)[t];
            p.x_init[L.vz(t)] =
                ((*pins->pin_z)[t] - (t == 0 ? st.r_start[2] : (*pins->pin_z)[t - 1])) / dT;
        } else {
            // Gentle climb (or descent) keeps the altitude strictly inside
            // its per-slot reachability window, consistently with C3.
            const double dir = (st.r_start[2] <= 0.5 * (lim.z_min + lim.z_max)) ? 1.0 : -1.0;
            const double vz0 = 0.25 * lim.V_max_z * dir;
            p.x_init[L.vz(t)] = vz0;
            p.x_init[L.rz(t)] = st.r_start[2] + vz0 * dT * (t + 1);
        }
        p.lo[L.vbar(t)] = 0.0;
        p.hi[L.vbar(t)] = lim.V_max_xy + 1.0;
        p.scale[L.vbar(t)] = std::max(lim.V_max_xy, 1.0);
        p.x_init[L.vbar(t)] = 0.01;

        p.lo[L.tpow(t)] = t_floor;
        p.hi[L.tpow(t)] = t_cap;
        p.scale[L.tpow(t)] = t_cap / 3.0;
        {
            double ptot_seed = 0.0;
            for (int i = 0; i < NF; ++i)
                for (int k = 0; k < K; ++k)
                    if (L.ptilde(k, i, t) >= 0) ptot_seed += p.x_init[L.ptilde(k, i, t)];
            p.x_init[L.tpow(t)] =
                std::min(t_cap * (1.0 - 1e-6),
                         ptot_seed * eps_inv + hover_power * 1.02 +
                             der.W_weight * std::max(0.0, p.x_init[L.vz(t)]) +
                             sc.constants.P_static + 4.0);
        }

        for (int k = 0; k < K; ++k) {
            const int th = L.theta(k, t);
            p.lo[th] = min_sqdist_reach(sc, st, k, t) * 0.999;
            p.hi[th] = theta_hi;
            p.scale[th] = std::max(theta_hi / 8.0, 1.0);
            const double d2 =
                sqdist({p.x_init[L.rx(t)], p.x_init[L.ry(t)], p.x_init[L.rz(t)]}, sc.users[k]);
            p.x_init[th] = std::min(d2 * 1.01 + 1.0, theta_hi * (1.0 - 1e-9));
        }
        if (sca) {
            p.lo[L.mu(t)] = mu_min * 0.95;
            p.hi[L.mu(t)] = mu_hover * 1.05;
            p.scale[L.mu(t)] = mu_hover;
            p.lo[L.b(t)] = 1.0 / (mu_hover * 1.04);
            p.hi[L.b(t)] = 1.05 / mu_min;
            p.scale[L.b(t)] = 1.0 / mu_hover;
            // A hair of negative room keeps the linearized C16c interior
            // nonempty at a hover expansion point; understating the speed
            // only raises the charged level power.
            p.lo[L.l(t)] = -0.01;
            p.hi[L.l(t)] = lim.V_max_xy * lim.V_max_xy * 1.02;
            p.scale[L.l(t)] = std::max(lim.V_max_xy * lim.V_max_xy / 2.0, 1.0);
            p.x_init[L.l(t)] = -0.004;
            p.lo[L.gamma(t)] = 4.0 * vh4 * 0.5;
            p.hi[L.gamma(t)] = (std::pow(lim.V_max_xy, 4.0) + 4.0 * vh4) * 1.05;
            p.scale[L.gamma(t)] = p.hi[L.gamma(t)] / 2.0;
            p.x_init[L.gamma(t)] = 4.0 * vh4 * 0.98;
            // hover-consistent chain: b^2 <= l + sqrt(gamma), mu >= 1/b
            p.x_init[L.b(t)] = std::sqrt(std::sqrt(p.x_init[L.gamma(t)])) * 0.995;
            p.x_init[L.mu(t)] = std::clamp(1.005 / p.x_init[L.b(t)], p.lo[L.mu(t)] * 1.01,
                                           p.hi[L.mu(t)] * 0.99);
            p.lo[L.varpi(t)] = varpi_lo;
            p.hi[L.varpi(t)] = varpi_hi;
            p.scale[L.varpi(t)] = std::max(varpi_hi / 4.0, 1e-9);
            p.x_init[L.varpi(t)] = std::clamp(
                C1dT * convex::sigmoid(sc.solar.k_c * (p.x_init[L.rz(t)] - sc.solar.alpha)),
                varpi_lo * 2.0, varpi_hi * 0.9);
        }
    }
    for (int t = 0; t <= T; ++t) {
        // Keep a strict interior even for q_end = q_max.
        p.lo[L.q(t)] = (t == T) ? std::min(lim.q_end, lim.q_max * (1.0 - 1e-12)) : 0.0;
        p.hi[L.q(t)] = lim.q_max;
        p.scale[L.q(t)] = std::max(lim.q_max / 2.0, 1.0);
        p.x_init[L.q(t)] = st.q_start;
    }

    // Seed the battery path with a deliberately lossy ledger (80% of the
    // sigmoid harvest plus a per-slot waste) so the increment caps and the
    // SCA's varpi link start strictly slack.
    const double q_margin = 1e-7 * lim.q_max;
    for (int t = 0; t < T; ++t) {
        const double harv =
            der.C2 + 0.8 * der.C1 *
                         convex::sigmoid(sc.solar.k_c * (p.x_init[L.rz(t)] - sc.solar.alpha));
        const double next = p.x_init[L.q(t)] + (harv - p.x_init[L.tpow(t)]) * dT - q_margin;
        p.x_init[L.q(t + 1)] = std::clamp(next, q_margin, lim.q_max * (1.0 - 1e-9));
    }

    // Preconditioning must see narrow boxes (short-horizon reachability
    // windows are far smaller than the physical magnitudes).
    for (int i = 0; i < L.n_vars; ++i) {
        if (std::isfinite(p.lo[i]) && std::isfinite(p.hi[i])) {
            const double width = p.hi[i] - p.lo[i];
            if (width > 0.0) p.scale[i] = std::min(p.scale[i], std::max(width / 4.0, 1e-9));
        }
    }

    // ----------------------------- equalities ------------------------------
    std::vector<std::pair<std::vector<std::pair<int, double>>, double>> eq_rows;
    auto add_eq = [&](std::vector<std::pair<int, double>> cols, double rhs) {
        eq_rows.push_back({std::move(cols), rhs});
    };

    add_eq({{L.q(0), 1.0}}, st.q_start);  // battery boundary
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < 3; ++c) {
            std::vector<std::pair<int, double>> cols{{L.r0 + 3 * t + c, 1.0},
                                                     {L.v0 + 3 * t + c, -dT}};
            double rhs = 0.0;
            if (t == 0)
                rhs = st.r_start[c];
            else
                cols.push_back({L.r0 + 3 * (t - 1) + c, -1.0});
            add_eq(std::move(cols), rhs);
        }
        if (pins && pins->pin_xy) {
            add_eq({{L.rx(t), 1.0}}, 0.0);
            add_eq({{L.ry(t), 1.0}}, 0.0);
        }
        if (zpin) add_eq({{L.rz(t), 1.0}}, (*pins->pin_z)[t]);
    }
    p.A = convex::Mat::Zero(static_cast<int>(eq_rows.size()), L.n_vars);
    p.b = convex::Vec::Zero(static_cast<int>(eq_rows.size()));
    for (std::size_t r = 0; r < eq_rows.size(); ++r) {
        for (auto [c, v] : eq_rows[r].first) p.A(static_cast<int>(r), c) = v;
        p.b[static_cast<int>(r)] = eq_rows[r].second;
    }

    // ---------------------------- inequalities -----------------------------
    const double row1a = 1.0 / std::max({eps_inv, der.W_weight, 1.0});

    for (int t = 0; t < T; ++t) {
        // C1a: power balance with the level-flight charge.
        {
            std::vector<int> idx;
            std::vector<double> coef;
            for (int i = 0; i < NF; ++i)
                for (int k = 0; k < K; ++k) {
                    const int id = L.ptilde(k, i, t);
                    if (id < 0) continue;
                    idx.push_back(id);
                    coef.push_back(eps_inv);
                }
            idx.push_back(L.vz(t));
            coef.push_back(der.W_weight);
            idx.push_back(L.tpow(t));
            coef.push_back(-1.0);
            double cst = sc.constants.P_static;
            if (proj) {
                const double mu_t = proj->mu_charge >= 0.0
                                        ? proj->mu_charge
                                        : proj->lambda * proj->mu[static_cast<std::size_t>(t)];
                cst += der.rho1 * mu_t;
            } else {
                idx.push_back(L.mu(t));
                coef.push_back(der.rho1);
            }
            const int cube_local = static_cast<int>(idx.size());
            idx.push_back(L.vbar(t));
            coef.push_back(0.0);
            Vec a(static_cast<int>(coef.size()));
            for (std::size_t i = 0; i < coef.size(); ++i) a[static_cast<int>(i)] = coef[i] * row1a;
            p.ineq.push_back(std::make_shared<AffineCubeTerm>("C1a", idx, a, cst * row1a,
                                                              cube_local, der.rho2 * row1a));
        }
        // C1b: t[n] dT <= q[n]
        {
            Vec a(2);
            a << dT / lim.q_max, -1.0 / lim.q_max;
            p.ineq.push_back(std::make_shared<AffineTerm>(
                "C1b", std::vector<int>{L.tpow(t), L.q(t)}, a, 0.0));
        }
        // C11: total power cap
        {
            std::vector<int> idx;
            for (int i = 0; i < NF; ++i)
                for (int k = 0; k < K; ++k)
                    if (L.ptilde(k, i, t) >= 0) idx.push_back(L.ptilde(k, i, t));
            if (!idx.empty()) {
                Vec a = Vec::Constant(static_cast<int>(idx.size()), 1.0 / sc.constants.P_max);
                p.ineq.push_back(std::make_shared<AffineTerm>("C11", idx, a, -1.0));
            }
        }
        // C15 per user: squared distance below theta.
        for (int k = 0; k < K; ++k) {
            Vec off(3);
            off << sc.users[k][0], sc.users[k][1], 0.0;
            const double w15 = 1.0 / std::max(1.0, theta_hi / 8.0);
            std::vector<int> idx{L.rx(t), L.ry(t), L.rz(t), L.theta(k, t)};
            p.ineq.push_back(std::make_shared<detail_terms::ScaledQuadTerm>("C15", idx, off, 3, w15));
        }
        // C8 and C17: horizontal speed caps (smoothed norms).
        p.ineq.push_back(std::make_shared<SmoothNormTerm>(
            "C8", std::vector<int>{L.vx(t), L.vy(t)},
            std::vector<SmoothNormTerm::Component>{{0, -1}, {1, -1}}, kNormEps, lim.V_max_xy));
        p.ineq.push_back(std::make_shared<SmoothNormTerm>(
            "C17", std::vector<int>{L.vx(t), L.vy(t), L.vbar(t)},
            std::vector<SmoothNormTerm::Component>{{0, -1}, {1, -1}}, kNormEps, 0.0, 2));
        // C4: acceleration cap between consecutive slots.
        if (t > 0) {
            p.ineq.push_back(std::make_shared<SmoothNormTerm>(
                "C4",
                std::vector<int>{L.vx(t), L.vy(t), L.vz(t), L.vx(t - 1), L.vy(t - 1), L.vz(t - 1)},
                std::vector<SmoothNormTerm::Component>{{0, 3}, {1, 4}, {2, 5}}, kNormEps,
                lim.a_max * dT));
        }
        // Battery increment cap: inc <= C1 dT env(z) (+C2 shift). The original
        // battery constraint is an inequality (energy may be wasted), so no
        // lower bound is imposed; the executed ledger never wastes below the
        // cap anyway.
        {
            const double wq = 1.0 / lim.q_max;
            const double zl = zpin ? (*pins->pin_z)[t] : zlo[t];
            const double zh = zpin ? (*pins->pin_z)[t] : zhi[t];
            HarvestEnv env = (der.C1 > 0.0)
                                 ? harvest_envelope(sc.solar.k_c, sc.solar.alpha, zl, zh)
                                 : HarvestEnv{HarvestEnv::CONST, 0, 0, 0, 0.0};
            wp.harvest.push_back(env);
            if (proj) {
                p.ineq.push_back(std::make_shared<detail_terms::HarvestCapTerm>(
                    "C2_cap", std::vector<int>{L.q(t + 1), L.q(t), L.tpow(t), L.rz(t)}, dT,
                    der.C2 * dT, C1dT, sc.solar.k_c, sc.solar.alpha, env, wq));
            } else {
                // SCA: increment <= varpi (C18) and the linearized log link.
                Vec ac(4);
                ac << wq, -wq, dT * wq, -wq;
                p.ineq.push_back(std::make_shared<AffineTerm>(
                    "C18_up", std::vector<int>{L.q(t + 1), L.q(t), L.tpow(t), L.varpi(t)}, ac,
                    -der.C2 * dT * wq));
                if (der.C1 > 0.0) {
                    const double vm = std::clamp(sca->varpi[static_cast<std::size_t>(t)], varpi_lo,
                                                 varpi_hi);
                    // vm * [softplus(-kc (z-alpha)) + ln vm + (v - vm)/vm - ln(C1 dT)] <= 0,
                    // scaled by vm so the row stays O(1) when vm is tiny.
                    Vec a2(2);
                    a2 << 1.0, 0.0;
                    p.ineq.push_back(std::make_shared<AffineSoftplusTerm>(
                        "C2_sca", std::vector<int>{L.varpi(t), L.rz(t)}, a2,
                        vm * (std::log(vm) - 1.0 - std::log(C1dT)), 1,
                        sc.solar.k_c * sc.solar.alpha, -sc.solar.k_c, vm));
                } else {
                    Vec a2(3);
                    a2 << wq, -wq, dT * wq;
                    // no cloud: increment pinned at zero from above too
                    p.ineq.push_back(std::make_shared<AffineTerm>(
                        "C2_nocloud", std::vector<int>{L.q(t + 1), L.q(t), L.tpow(t)}, a2,
                        -der.C2 * dT * wq));
                }
            }
        }
    }

    if (st.v_prev) {
        p.ineq.push_back(std::make_shared<SmoothNormTerm>(
            "C4_init", std::vector<int>{L.vx(0), L.vy(0), L.vz(0)},
            std::vector<SmoothNormTerm::Component>{{0, -1, -(*st.v_prev)[0]},
                                                   {1, -1, -(*st.v_prev)[1]},
                                                   {2, -1, -(*st.v_prev)[2]}},
            kNormEps, lim.a_max * dT));
    }

    // Projection-only: C19 rows linking p~, theta to the scaled vertex.
    if (proj) {
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < NF; ++i)
                for (int k = 0; k < K; ++k) {
                    if (L.ptilde(k, i, t) < 0) continue;  // pinned competitor
                    const double chi_s =
                        proj->lambda *
                        proj->chi[(static_cast<std::size_t>(t) * NF + i) * K + k];
                    const double m = chi_s - 1.0;
                    if (m <= kChiRowFloor) continue;  // row is always slack near chi = 1
                    const double Hk = gains.at(k, i, t);
                    std::vector<int> idx;
                    std::vector<double> coef;
                    for (int j = 0; j < K; ++j) {
                        const int id = L.ptilde(j, i, t);
                        if (id < 0) continue;
                        idx.push_back(id);
                        coef.push_back(j == k ? -Hk : m * sc.xi * Hk);
                    }
                    idx.push_back(L.theta(k, t));
                    coef.push_back(m);
                    double norm = 0.0;
                    for (double cv : coef) norm = std::max(norm, std::abs(cv));
                    if (norm <= 0.0) continue;
                    Vec a(static_cast<int>(coef.size()));
                    for (std::size_t j = 0; j < coef.size(); ++j)
                        a[static_cast<int>(j)] = coef[j] / norm;
                    p.ineq.push_back(std::make_shared<AffineTerm>("C19", idx, a, 0.0));
                }
    }

    // SCA-only: C16 chain, QoS rows, and the d.c. objective.
    if (sca) {
        for (int t = 0; t < T; ++t) {
            p.ineq.push_back(
                std::make_shared<RecipTerm>("C16a", std::vector<int>{L.b(t), L.mu(t)}));
            p.ineq.push_back(std::make_shared<SquareMinusSqrtTerm>(
                "C16b", std::vector<int>{L.b(t), L.l(t), L.gamma(t)}, kNormEps));
            const double vxm = sca->vx[static_cast<std::size_t>(t)];
            const double vym = sca->vy[static_cast<std::size_t>(t)];
            {
                Vec a(3);
                a << 1.0, -2.0 * vxm, -2.0 * vym;
                p.ineq.push_back(std::make_shared<AffineTerm>(
                    "C16c", std::vector<int>{L.l(t), L.vx(t), L.vy(t)}, a,
                    vxm * vxm + vym * vym));
            }
            {
                const double lm = sca->l[static_cast<std::size_t>(t)];
                Vec a(2);
                const double wg = 1.0 / std::max(1.0, 4.0 * vh4);
                a << wg, -2.0 * lm * wg;
                p.ineq.push_back(std::make_shared<AffineTerm>(
                    "C16d", std::vector<int>{L.gamma(t), L.l(t)}, a,
                    (lm * lm - 4.0 * vh4) * wg));
            }
        }
        // QoS rows (exact current slot, expected-rate bound for the future).
        const double ln2 = std::log(2.0);
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k) {
                const double rreq = sc.R_req(k);
                if (rreq <= 0.0) continue;
                std::vector<int> idx;
                for (int i = 0; i < NF; ++i)
                    for (int j = 0; j < K; ++j)
                        if (L.ptilde(j, i, t) >= 0) idx.push_back(L.ptilde(j, i, t));
                idx.push_back(L.theta(k, t));
                const int nl = static_cast<int>(idx.size());
                auto local_of = [&](int var) {
                    for (int q = 0; q < nl; ++q)
                        if (idx[q] == var) return q;
                    return -1;
                };
                const double wrow = 1.0 / std::max(sc.constants.B, rreq);
                Vec aff = Vec::Zero(nl);
                double cst = rreq * wrow;
                std::vector<LogSumTerm::LogPiece> pieces;
                for (int i = 0; i < NF; ++i) {
                    // -B log2(sum_j Hbar p_j + theta_k): the log piece.
                    Vec bvec = Vec::Zero(nl);
                    for (int j = 0; j < K; ++j) {
                        const int id = L.ptilde(j, i, t);
                        if (id >= 0) bvec[local_of(id)] = gains.at(k, i, t);
                    }
                    bvec[nl - 1] = 1.0;
                    pieces.push_back({-sc.constants.B / ln2 * wrow, bvec, 0.0});
                    // -Q_lower: affine tangent of the convex Q at the point.
                    double den = sca->theta[static_cast<std::size_t>(t) * K + k];
                    for (int j = 0; j < K; ++j)
                        if (j != k)
                            den += gains.at(k, i, t) *
                                   sca->ptilde[(static_cast<std::size_t>(t) * NF + i) * K + j];
                    den = std::max(den, 1e-12);
                    cst += sc.constants.B / ln2 * wrow * std::log(den);
                    const double slope = sc.constants.B / (ln2 * den) * wrow;
                    for (int j = 0; j < K; ++j) {
                        if (j == k) continue;
                        const int id = L.ptilde(j, i, t);
                        if (id >= 0) aff[local_of(id)] += slope * gains.at(k, i, t);
                        cst -= slope * gains.at(k, i, t) *
                               sca->ptilde[(static_cast<std::size_t>(t) * NF + i) * K + j];
                    }
                    aff[nl - 1] += slope;
                    cst -= slope * sca->theta[static_cast<std::size_t>(t) * K + k];
                }
                p.ineq.push_back(
                    std::make_shared<LogSumTerm>("C14", idx, aff, cst, std::move(pieces)));
            }

        // Objective: -sum log2(f_d) - G_lower(p~, theta).
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < NF; ++i)
                for (int k = 0; k < K; ++k) {
                    std::vector<int> idx;
                    for (int j = 0; j < K; ++j)
                        if (L.ptilde(j, i, t) >= 0) idx.push_back(L.ptilde(j, i, t));
                    idx.push_back(L.theta(k, t));
                    const int nl = static_cast<int>(idx.size());
                    Vec bvec = Vec::Zero(nl);
                    int pos = 0;
                    for (int j = 0; j < K; ++j) {
                        const int id = L.ptilde(j, i, t);
                        if (id < 0) continue;
                        bvec[pos++] = (j == k) ? gains.at(k, i, t) : sc.xi * gains.at(k, i, t);
                    }
                    bvec[nl - 1] = 1.0;
                    p.obj_terms.push_back(std::make_shared<LogSumTerm>(
                        "obj_f", idx, Vec::Zero(nl), 0.0,
                        std::vector<LogSumTerm::LogPiece>{{-1.0 / ln2, bvec, 0.0}}));

                    // G tangent: G = -sum log2(g_d), g_d = xi sum_{j!=k} H p_j + theta.
                    double gden = sca->theta[static_cast<std::size_t>(t) * K + k];
                    for (int j = 0; j < K; ++j)
                        if (j != k)
                            gden += sc.xi * gains.at(k, i, t) *
                                    sca->ptilde[(static_cast<std::size_t>(t) * NF + i) * K + j];
                    gden = std::max(gden, 1e-12);
                    p.obj_const += std::log(gden) / ln2;  // -G(m) contribution
                    const double slope = -1.0 / (ln2 * gden);  // dG/d(g_d) with the leading minus
                    // -G_lower = -G(m) - grad G . (x - x^m); grad over p_j (j!=k), theta_k
                    for (int j = 0; j < K; ++j) {
                        if (j == k) continue;
                        const int id = L.ptilde(j, i, t);
                        const double coeff = -slope * sc.xi * gains.at(k, i, t);
                        if (id >= 0) p.obj_lin[id] += coeff;
                        p.obj_const -= coeff *
                                       sca->ptilde[(static_cast<std::size_t>(t) * NF + i) * K + j];
                    }
                    const double ct = -slope;
                    p.obj_lin[L.theta(k, t)] += ct;
                    p.obj_const -= ct * sca->theta[static_cast<std::size_t>(t) * K + k];
                }
        wp.feasible_check_only = false;
    }

    return wp;
}

// Canonical plan from a solved decision vector: power/assignment from the
// variables, consumption re-derived from the true aero model, battery from
// the bound-harvest ledger. The ledger can only hold more energy than the
// solver's path, so feasibility is preserved.
inline Plan extract_plan(const Scenario& sc, const GainsView& gains, const VariableLayout& L,
                         const convex::Vec& x, int n0, const WindowState& st) {
    Plan plan;
    plan.resize(n0, L.T, L.K, L.N_F);
    for (int t = 0; t < L.T; ++t) {
        plan.r[t] = {x[L.rx(t)], x[L.ry(t)], x[L.rz(t)]};
        plan.v[t] = {x[L.vx(t)], x[L.vy(t)], x[L.vz(t)]};
        for (int i = 0; i < L.N_F; ++i)
            for (int k = 0; k < L.K; ++k) {
                const int id = L.ptilde(k, i, t);
                plan.ptilde[plan.pidx(k, i, t)] = id >= 0 ? std::max(0.0, x[id]) : 0.0;
            }
        for (int k = 0; k < L.K; ++k)
            plan.theta[static_cast<std::size_t>(t) * L.K + k] = sqdist(plan.r[t], sc.users[k]);
    }
    recover_assignment(plan);
    // Zero out sub-threshold residues so audits see the recovered assignment.
    for (std::size_t j = 0; j < plan.ptilde.size(); ++j)
        if (!plan.assignment[j]) plan.ptilde[j] = 0.0;

    plan.q[0] = st.q_start;
    double q = st.q_start;
    for (int t = 0; t < L.T; ++t) {
        double ptot = 0.0;
        for (int i = 0; i < L.N_F; ++i)
            for (int k = 0; k < L.K; ++k) ptot += plan.p(k, i, t);
        const double consumed = ptot / sc.constants.eps_pa + aero_power(plan.v[t], sc.derived) +
                                sc.constants.P_static;
        plan.t[t] = consumed;
        q = std::min(sc.limits.q_max,
                     q + (solar_power_bound(plan.r[t][2], sc.derived, sc.solar) - consumed) *
                             sc.Delta_T);
        plan.q[t + 1] = q;
    }
    double obj = 0.0;
    for (int t = 0; t < L.T; ++t)
        for (int i = 0; i < L.N_F; ++i)
            for (int k = 0; k < L.K; ++k)
                if (plan.s(k, i, t))
                    obj += rate(plan.p(k, i, t), gains.at(k, i, t), plan.r[t], sc.users[k],
                                sc.constants.B);
    plan.objective_bps = obj;
    return plan;
}

// True d.c. objective of the suboptimal scheme at a full decision vector
// (minimization orientation, log2 units).
inline double sca_true_objective(const Scenario& sc, const GainsView& gains,
                                 const VariableLayout& L, const convex::Vec& x) {
    const double ln2 = std::log(2.0);
    double obj = 0.0;
    for (int t = 0; t < L.T; ++t)
        for (int i = 0; i < L.N_F; ++i)
            for (int k = 0; k < L.K; ++k) {
                double fd = x[L.theta(k, t)];
                double gd = x[L.theta(k, t)];
                for (int j = 0; j < L.K; ++j) {
                    const int id = L.ptilde(j, i, t);
                    if (id < 0) continue;
                    const double pj = x[id];
                    fd += (j == k ? 1.0 : sc.xi) * gains.at(k, i, t) * pj;
                    if (j != k) gd += sc.xi * gains.at(k, i, t) * pj;
                }
                obj += -std::log(std::max(fd, 1e-300)) / ln2 + std::log(std::max(gd, 1e-300)) / ln2;
            }
    return obj;
}

}  // namespace uavopt
