#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "uavopt/scenario.hpp"

namespace uavopt {

struct UavKinematics {
    std::array<double, 3> r{0, 0, 0};  // position (m)
    std::array<double, 3> v{0, 0, 0};  // velocity (m/s)
};

// Battery contents per slot boundary plus per-slot power flows.
struct EnergyLedger {
    std::vector<double> q;          // length N_T + 1 (J)
    std::vector<double> consumed;   // per-slot total consumed power (W)
    std::vector<double> harvested;  // per-slot harvested power (W)
    std::vector<double> overflow;   // per-slot wasted energy on a full battery (J)
};

// Piecewise solar output (above / inside / below the cloud layer).
inline double solar_power_actual(double z, const SolarParams& sp) {
    const double full = sp.eta * sp.S * sp.G;
    if (z >= sp.L_up) return full;
    if (z >= sp.L_low) return full * std::exp(-sp.beta_c * (sp.L_up - z));
    return full * std::exp(-sp.beta_c * (sp.L_up - sp.L_low));
}

// Smooth sigmoid lower bound C1 / (1 + e^{-k_c (z - alpha)}) + C2.
inline double solar_power_bound(double z, const DerivedConstants& d, const SolarParams& sp) {
    return d.C1 / (1.0 + std::exp(-sp.k_c * (z - sp.alpha))) + d.C2;
}

// Induced power for level flight at horizontal speed sqrt(w2), w2 = vx^2+vy^2.
inline double aero_level_power(double w2, const DerivedConstants& d) {
    const double vh4 = d.V_h * d.V_h * d.V_h * d.V_h;
    return d.rho1 / std::sqrt(w2 + std::sqrt(w2 * w2 + 4.0 * vh4));
}

// Total aerodynamic power: level + vertical + blade drag. Descending flight
// (vz < 0) contributes a negative vertical term; no flooring at zero.
inline double aero_power(const std::array<double, 3>& v, const DerivedConstants& d) {
    const double w2 = v[0] * v[0] + v[1] * v[1];
    return aero_level_power(w2, d) + d.W_weight * v[2] + d.rho2 * std::pow(w2, 1.5);
}

struct LedgerStep {
    double q_next = 0.0;
    double overflow = 0.0;  // energy wasted against the q_max cap (J)
    bool depleted = false;  // consumed energy exceeded the stored energy (C1)
};

// One battery update. Consumption is limited by the stored energy at the slot
// start (C1); harvest beyond the q_max headroom is wasted (C6 clamp).
inline LedgerStep ledger_step(double q_n, double consumed_power, double z, double Delta_T,
                              bool use_bound, const Scenario& sc) {
    LedgerStep out;
    const double harvest =
        use_bound ? solar_power_bound(z, sc.derived, sc.solar) : solar_power_actual(z, sc.solar);
    out.depleted = consumed_power * Delta_T > q_n * (1.0 + 1e-12) + 1e-9;
    const double raw = q_n + (harvest - consumed_power) * Delta_T;
    out.q_next = std::min(sc.limits.q_max, raw);
    out.overflow = std::max(0.0, raw - sc.limits.q_max);
    return out;
}

}  // namespace uavopt
