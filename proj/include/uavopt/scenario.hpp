#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uavopt/philox.hpp"

namespace uavopt {

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double wh_to_joule(double wh) { return wh * 3600.0; }

struct PhysicalConstants {
    double c = 3.0e8;          // speed of light (m/s)
    double f0 = 700.0e6;       // carrier center frequency (Hz)
    double W_bw = 5.0e6;       // total bandwidth (Hz)
    int N_F = 64;              // subcarrier count
    double B = 5.0e6 / 64;     // per-subcarrier bandwidth (Hz), W_bw / N_F
    double N0 = 3.981071705534985e-21;  // noise PSD (W/Hz)
    double eps_pa = 0.5;       // power-amplifier efficiency, in (0,1)
    double P_static = 5.0;     // static power (W)
    double P_max = 15.848931924611133;  // max transmit power (W)
    double kappa = 3.9810717055349722;  // Rician factor (linear); +inf = pure LoS
};

struct SolarParams {
    double eta = 0.4;     // harvesting efficiency
    double S = 1.0;       // panel area (m^2)
    double G = 1367.0;    // solar intensity (W/m^2)
    double beta_c = 0.01; // cloud absorption coefficient (1/m)
    double L_low = 700.0; // cloud lower boundary (m)
    double L_up = 1400.0; // cloud upper boundary (m)
    double k_c = 0.05;    // sigmoid steepness
    double alpha = 1351.0;// sigmoid midpoint (m)
};

struct AeroParams {
    double m = 4.0;      // UAV mass (kg)
    double g = 9.8;      // gravitational acceleration (m/s^2)
    double rho = 1.225;  // air density (kg/m^3)
    double A = 0.18;     // total rotor disk area (m^2)
    double C_D0 = 0.08;  // profile drag coefficient
};

struct LimitsParams {
    double V_max_xy = 10.0;
    double V_max_z = 4.0;
    double a_max = 2.0;
    double z_min = 100.0;
    double z_max = 1600.0;
    double q_max = 222.0 * 3600.0;  // J
    double q0 = 111.0 * 3600.0;    // J
    double q_end = 55.0 * 3600.0;  // J
    std::vector<double> R_req_k;   // per-user minimum rate (bit/s)
};

struct DerivedConstants {
    double zeta = 0.0;     // (c / 4 pi f0)^2
    double W_weight = 0.0; // m g (N)
    double V_h = 0.0;      // sqrt(W / 2 rho A)
    double rho1 = 0.0;     // W^2 / (sqrt(2) rho A)
    double rho2 = 0.0;     // C_D0 rho A / 8
    double C1 = 0.0;       // eta S G (1 - e^{-beta_c (L_up - L_low)})
    double C2 = 0.0;       // eta S G e^{-beta_c (L_up - L_low)}
    double E_const = 0.0;  // ln(C1 dT / (1 + e^{-k_c(z_max - alpha)})), -inf if C1 = 0
};

struct SolverOptions {
    double xi = 1.0e6;      // exclusivity penalty
    double eps1 = 0.01;     // polyblock stop tolerance
    double eps2 = 0.01;     // bisection tolerance
    double eps3 = 0.01;     // SCA stop tolerance
    int vertex_cap = 100000;
    int max_outer_iters = 4000;  // polyblock iteration cap
    int global_nt_cap = 6;       // largest N_T routed to the global solver
    int replan_every = 1;
};

struct Scenario {
    PhysicalConstants constants;
    SolarParams solar;
    AeroParams aero;
    LimitsParams limits;
    DerivedConstants derived;
    std::vector<std::array<double, 2>> users;  // ground (x_k, y_k)
    int N_T = 1;
    double Delta_T = 0.02;
    std::array<double, 3> r_init{0.0, 0.0, 100.0};
    double xi = 1.0e6;
    std::uint64_t seed = 1;
    SolverOptions solver;

    int K() const { return static_cast<int>(users.size()); }
    double R_req(int k) const {
        if (limits.R_req_k.empty()) return 0.0;
        return limits.R_req_k[static_cast<std::size_t>(k) % limits.R_req_k.size()];
    }
};

// Effective channel gains H[k][i][n] = zeta |h|^2 / (N0 B); distance enters the
// rate separately.
struct ChannelTensor {
    int K = 0, N_F = 0, N_T = 0;
    std::vector<double> H;   // K * N_F * N_T
    std::vector<double> EH;  // K * N_F

    double& at(int k, int i, int n) { return H[(static_cast<std::size_t>(n) * N_F + i) * K + k]; }
    double at(int k, int i, int n) const { return H[(static_cast<std::size_t>(n) * N_F + i) * K + k]; }
    double mean(int k, int i) const { return EH[static_cast<std::size_t>(i) * K + k]; }
};

inline DerivedConstants derive_constants(const PhysicalConstants& pc, const SolarParams& sp,
                                         const AeroParams& ap, const LimitsParams& lp,
                                         double Delta_T) {
    if (!(pc.f0 > 0.0)) throw std::invalid_argument("derive_constants: f0 must be positive");
    if (!(pc.c > 0.0)) throw std::invalid_argument("derive_constants: c must be positive");
    if (!(ap.m > 0.0)) throw std::invalid_argument("derive_constants: m must be positive");
    if (!(ap.g > 0.0)) throw std::invalid_argument("derive_constants: g must be positive");
    if (!(ap.rho > 0.0)) throw std::invalid_argument("derive_constants: rho must be positive");
    if (!(ap.A > 0.0)) throw std::invalid_argument("derive_constants: A must be positive");
    if (!(sp.S > 0.0)) throw std::invalid_argument("derive_constants: S must be positive");
    if (!(Delta_T > 0.0)) throw std::invalid_argument("derive_constants: Delta_T must be positive");

    DerivedConstants d;
    const double lam = pc.c / (4.0 * M_PI * pc.f0);
    d.zeta = lam * lam;
    d.W_weight = ap.m * ap.g;
    d.V_h = std::sqrt(d.W_weight / (2.0 * ap.rho * ap.A));
    d.rho1 = d.W_weight * d.W_weight / (std::sqrt(2.0) * ap.rho * ap.A);
    d.rho2 = 0.125 * ap.C_D0 * ap.rho * ap.A;
    const double thick = sp.L_up - sp.L_low;
    d.C1 = sp.eta * sp.S * sp.G * (1.0 - std::exp(-sp.beta_c * thick));
    d.C2 = sp.eta * sp.S * sp.G * std::exp(-sp.beta_c * thick);
    if (d.C1 > 0.0) {
        d.E_const = std::log(d.C1 * Delta_T / (1.0 + std::exp(-sp.k_c * (lp.z_max - sp.alpha))));
    } else {
        d.E_const = -std::numeric_limits<double>::infinity();
    }
    return d;
}

namespace detail {
// Distinct counter streams so channel, user-placement, and baseline draws
// never collide.
enum Stream : std::uint32_t { kChannel = 0, kUsers = 1, kBaseline2 = 2 };
}  // namespace detail

// |h|^2 draw for user k, subcarrier i, slot n. Rician with unit mean power:
// h = sqrt(kappa/(kappa+1)) + sqrt(1/(2(kappa+1))) (g1 + j g2).
inline double rician_h2(std::uint64_t seed, double kappa, int k, int i, int n) {
    if (std::isinf(kappa)) return 1.0;
    const auto g = Philox4x32::normals(seed, static_cast<std::uint32_t>(n),
                                       static_cast<std::uint32_t>(i),
                                       static_cast<std::uint32_t>(k), detail::kChannel);
    const double los = std::sqrt(kappa / (kappa + 1.0));
    const double sig = std::sqrt(0.5 / (kappa + 1.0));
    const double re = los + sig * g[0];
    const double im = sig * g[1];
    return re * re + im * im;
}

inline ChannelTensor generate_channels(const Scenario& sc) {
    ChannelTensor t;
    t.K = sc.K();
    t.N_F = sc.constants.N_F;
    t.N_T = sc.N_T;
    t.H.resize(static_cast<std::size_t>(t.K) * t.N_F * t.N_T);
    t.EH.resize(static_cast<std::size_t>(t.K) * t.N_F);
    const double scale = sc.derived.zeta / (sc.constants.N0 * sc.constants.B);
    for (int n = 0; n < t.N_T; ++n)
        for (int i = 0; i < t.N_F; ++i)
            for (int k = 0; k < t.K; ++k)
                t.at(k, i, n) = scale * rician_h2(sc.seed, sc.constants.kappa, k, i, n);
    // E{|h|^2} = 1 by construction.
    for (int i = 0; i < t.N_F; ++i)
        for (int k = 0; k < t.K; ++k) t.EH[static_cast<std::size_t>(i) * t.K + k] = scale;
    return t;
}

// ---------------------------------------------------------------------------
// Config parsing: sectioned key/value text, '#'/';' comments, unit suffixes
// _dbm (dBm -> W), _wh (Wh -> J), _db (dB -> linear).
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigData {
    // section -> key -> values (repeatable keys accumulate)
    std::map<std::string, std::map<std::string, std::vector<std::string>>> kv;

    bool has(const std::string& sec, const std::string& key) const {
        auto s = kv.find(sec);
        if (s == kv.end()) return false;
        return s->second.count(key) > 0;
    }
    const std::string& get(const std::string& sec, const std::string& key) const {
        return kv.at(sec).at(key).back();
    }
};

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline ConfigData parse_config(const std::string& text) {
    ConfigData cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        cfg.kv[section][key].push_back(val);
    }
    return cfg;
}

inline double parse_double(const std::string& sec, const std::string& key, const std::string& v) {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (trim(v.substr(pos)).empty()) return d;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("config [" + sec + "] " + key + ": invalid number '" + v + "'");
}

// Reads field `name` from `sec`, honoring unit-suffixed variants.
struct FieldReader {
    const ConfigData& cfg;
    std::string sec;

    bool present(const std::string& name) const {
        return cfg.has(sec, name) || cfg.has(sec, name + "_dbm") || cfg.has(sec, name + "_wh") ||
               cfg.has(sec, name + "_db");
    }
    double number(const std::string& name, double fallback, bool* found = nullptr) const {
        if (cfg.has(sec, name)) {
            if (found) *found = true;
            return parse_double(sec, name, cfg.get(sec, name));
        }
        if (cfg.has(sec, name + "_dbm")) {
            if (found) *found = true;
            return dbm_to_watt(parse_double(sec, name, cfg.get(sec, name + "_dbm")));
        }
        if (cfg.has(sec, name + "_wh")) {
            if (found) *found = true;
            return wh_to_joule(parse_double(sec, name, cfg.get(sec, name + "_wh")));
        }
        if (cfg.has(sec, name + "_db")) {
            if (found) *found = true;
            return db_to_linear(parse_double(sec, name, cfg.get(sec, name + "_db")));
        }
        if (found) *found = false;
        return fallback;
    }
};

inline std::vector<double> parse_number_list(const std::string& sec, const std::string& key,
                                             const std::string& v) {
    std::vector<double> out;
    std::string piece;
    std::istringstream in(v);
    while (in >> piece) {
        if (!piece.empty() && piece.back() == ',') piece.pop_back();
        if (piece.empty()) continue;
        out.push_back(parse_double(sec, key, piece));
    }
    return out;
}

}  // namespace detail

inline Scenario load_scenario(const std::string& config_text) {
    using detail::FieldReader;
    auto cfg = detail::parse_config(config_text);
    Scenario sc;

    FieldReader phys{cfg, "physical"};
    sc.constants.c = phys.number("c", sc.constants.c);
    sc.constants.f0 = phys.number("f0", sc.constants.f0);
    sc.constants.W_bw = phys.number("W_bw", sc.constants.W_bw);
    sc.constants.N_F = static_cast<int>(phys.number("N_F", sc.constants.N_F));
    sc.constants.N0 = phys.number("N0", sc.constants.N0);
    sc.constants.eps_pa = phys.number("eps_pa", sc.constants.eps_pa);
    sc.constants.P_static = phys.number("P_static", sc.constants.P_static);
    sc.constants.P_max = phys.number("P_max", sc.constants.P_max);
    sc.constants.kappa = phys.number("kappa", sc.constants.kappa);
    if (sc.constants.N_F < 1) throw std::invalid_argument("scenario: N_F must be >= 1");
    if (!(sc.constants.W_bw > 0.0)) throw std::invalid_argument("scenario: W_bw must be positive");
    sc.constants.B = sc.constants.W_bw / sc.constants.N_F;
    if (!(sc.constants.eps_pa > 0.0 && sc.constants.eps_pa < 1.0))
        throw std::invalid_argument("scenario: eps_pa must lie in (0,1)");
    if (sc.constants.P_max < 0.0 || sc.constants.P_static < 0.0)
        throw std::invalid_argument("scenario: powers must be nonnegative");
    if (!(sc.constants.N0 > 0.0)) throw std::invalid_argument("scenario: N0 must be positive");

    FieldReader sol{cfg, "solar"};
    sc.solar.eta = sol.number("eta", sc.solar.eta);
    sc.solar.S = sol.number("S", sc.solar.S);
    sc.solar.G = sol.number("G", sc.solar.G);
    sc.solar.beta_c = sol.number("beta_c", sc.solar.beta_c);
    sc.solar.L_low = sol.number("L_low", sc.solar.L_low);
    sc.solar.L_up = sol.number("L_up", sc.solar.L_up);
    sc.solar.k_c = sol.number("k_c", sc.solar.k_c);
    sc.solar.alpha = sol.number("alpha", sc.solar.alpha);
    if (!(sc.solar.L_low < sc.solar.L_up))
        throw std::invalid_argument("scenario: L_low must be below L_up");
    if (sc.solar.beta_c < 0.0) throw std::invalid_argument("scenario: beta_c must be >= 0");
    if (sc.solar.k_c < 0.0) throw std::invalid_argument("scenario: k_c must be >= 0");
    if (sc.solar.alpha < 0.0) throw std::invalid_argument("scenario: alpha must be >= 0");

    FieldReader aero{cfg, "aero"};
    sc.aero.m = aero.number("m", sc.aero.m);
    sc.aero.g = aero.number("g", sc.aero.g);
    sc.aero.rho = aero.number("rho", sc.aero.rho);
    sc.aero.A = aero.number("A", sc.aero.A);
    sc.aero.C_D0 = aero.number("C_D0", sc.aero.C_D0);

    FieldReader lim{cfg, "limits"};
    sc.limits.V_max_xy = lim.number("V_max_xy", sc.limits.V_max_xy);
    sc.limits.V_max_z = lim.number("V_max_z", sc.limits.V_max_z);
    sc.limits.a_max = lim.number("a_max", sc.limits.a_max);
    sc.limits.z_min = lim.number("z_min", sc.limits.z_min);
    sc.limits.z_max = lim.number("z_max", sc.limits.z_max);
    sc.limits.q_max = lim.number("q_max", sc.limits.q_max);
    sc.limits.q0 = lim.number("q0", sc.limits.q0);
    sc.limits.q_end = lim.number("q_end", sc.limits.q_end);
    if (!(sc.limits.z_min < sc.limits.z_max))
        throw std::invalid_argument("scenario: z_min must be below z_max");
    if (sc.limits.q0 < 0.0 || sc.limits.q0 > sc.limits.q_max)
        throw std::invalid_argument("scenario: q0 must lie in [0, q_max]");
    if (sc.limits.q_end < 0.0 || sc.limits.q_end > sc.limits.q_max)
        throw std::invalid_argument("scenario: q_end must lie in [0, q_max]");

    FieldReader hor{cfg, "horizon"};
    sc.N_T = static_cast<int>(hor.number("N_T", sc.N_T));
    sc.Delta_T = hor.number("Delta_T", sc.Delta_T);
    if (sc.N_T < 1) throw std::invalid_argument("scenario: N_T must be >= 1");
    if (!(sc.Delta_T > 0.0)) throw std::invalid_argument("scenario: Delta_T must be positive");
    if (cfg.has("horizon", "r_init")) {
        auto v = detail::parse_number_list("horizon", "r_init", cfg.get("horizon", "r_init"));
        if (v.size() != 3) throw std::invalid_argument("scenario: r_init needs 3 coordinates");
        sc.r_init = {v[0], v[1], v[2]};
    } else {
        sc.r_init = {0.0, 0.0, sc.limits.z_min};
    }
    if (sc.r_init[2] < sc.limits.z_min || sc.r_init[2] > sc.limits.z_max)
        throw std::invalid_argument("scenario: r_init altitude outside [z_min, z_max]");

    FieldReader solv{cfg, "solver"};
    sc.xi = solv.number("xi", sc.xi);
    sc.seed = static_cast<std::uint64_t>(solv.number("seed", static_cast<double>(sc.seed)));
    sc.solver.xi = sc.xi;
    sc.solver.eps1 = solv.number("eps1", sc.solver.eps1);
    sc.solver.eps2 = solv.number("eps2", sc.solver.eps2);
    sc.solver.eps3 = solv.number("eps3", sc.solver.eps3);
    sc.solver.vertex_cap = static_cast<int>(solv.number("vertex_cap", sc.solver.vertex_cap));
    sc.solver.max_outer_iters =
        static_cast<int>(solv.number("max_outer_iters", sc.solver.max_outer_iters));
    sc.solver.global_nt_cap =
        static_cast<int>(solv.number("global_nt_cap", sc.solver.global_nt_cap));
    sc.solver.replan_every = static_cast<int>(solv.number("replan_every", sc.solver.replan_every));

    // Users: explicit `user = x y` lines, or `count` (+ optional `radius`)
    // placed uniformly in a disc with the scenario seed.
    sc.users.clear();
    if (cfg.has("users", "user")) {
        for (const auto& v : cfg.kv.at("users").at("user")) {
            auto xy = detail::parse_number_list("users", "user", v);
            if (xy.size() != 2) throw std::invalid_argument("scenario: user needs 2 coordinates");
            sc.users.push_back({xy[0], xy[1]});
        }
    } else if (cfg.has("users", "count")) {
        int count = static_cast<int>(detail::parse_double("users", "count", cfg.get("users", "count")));
        double radius = 800.0;
        if (cfg.has("users", "radius"))
            radius = detail::parse_double("users", "radius", cfg.get("users", "radius"));
        if (count < 1) throw std::invalid_argument("scenario: users count must be >= 1");
        for (int k = 0; k < count; ++k) {
            const auto blk = Philox4x32::generate(sc.seed, static_cast<std::uint32_t>(k), 0, 0,
                                                  detail::kUsers);
            const double u1 = Philox4x32::to_unit(blk[0]);
            const double u2 = Philox4x32::to_unit(blk[1]);
            const double r = radius * std::sqrt(u1);
            const double ang = 2.0 * M_PI * u2;
            sc.users.push_back({r * std::cos(ang), r * std::sin(ang)});
        }
    }
    if (sc.users.empty()) throw std::invalid_argument("scenario: missing users");

    sc.limits.R_req_k.clear();
    if (cfg.has("limits", "R_req_k")) {
        sc.limits.R_req_k =
            detail::parse_number_list("limits", "R_req_k", cfg.get("limits", "R_req_k"));
    } else if (cfg.has("limits", "R_req")) {
        // Total rate split evenly across users.
        const double total = detail::parse_double("limits", "R_req", cfg.get("limits", "R_req"));
        sc.limits.R_req_k.assign(sc.users.size(), total / static_cast<double>(sc.users.size()));
    } else {
        sc.limits.R_req_k.assign(sc.users.size(), 0.0);
    }
    for (double r : sc.limits.R_req_k)
        if (r < 0.0) throw std::invalid_argument("scenario: R_req_k must be >= 0");

    sc.derived = derive_constants(sc.constants, sc.solar, sc.aero, sc.limits, sc.Delta_T);
    return sc;
}

}  // namespace uavopt
