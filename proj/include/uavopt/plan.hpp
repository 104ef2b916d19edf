#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace uavopt {

// Per-slot trajectory, combined power allocation p~ = s p, recovered
// subcarrier assignment, and the energy ledger. Slots are local indices
// 0..T-1 covering scenario slots n0..n0+T-1 (1-based n0).
struct Plan {
    int n0 = 1;  // first scenario slot covered (1-based)
    int T = 0;   // slot count
    int K = 0;
    int N_F = 0;

    std::vector<double> ptilde;            // K*N_F*T, combined power (W)
    std::vector<std::uint8_t> assignment;  // K*N_F*T, recovered s
    std::vector<double> theta;             // K*T, squared-distance bound (m^2)
    std::vector<std::array<double, 3>> r;  // T positions
    std::vector<std::array<double, 3>> v;  // T velocities
    std::vector<double> q;                 // T+1 stored energy (J)
    std::vector<double> t;                 // T total consumed power (W)

    double objective_bps = 0.0;  // sum rate over the plan horizon (bit/s)

    std::size_t pidx(int k, int i, int t_local) const {
        return (static_cast<std::size_t>(t_local) * N_F + i) * K + k;
    }
    double p(int k, int i, int t_local) const { return ptilde[pidx(k, i, t_local)]; }
    bool s(int k, int i, int t_local) const { return assignment[pidx(k, i, t_local)] != 0; }

    void resize(int n0_, int T_, int K_, int NF_) {
        n0 = n0_;
        T = T_;
        K = K_;
        N_F = NF_;
        ptilde.assign(static_cast<std::size_t>(K) * N_F * T, 0.0);
        assignment.assign(static_cast<std::size_t>(K) * N_F * T, 0);
        theta.assign(static_cast<std::size_t>(K) * T, 0.0);
        r.assign(T, {0, 0, 0});
        v.assign(T, {0, 0, 0});
        q.assign(T + 1, 0.0);
        t.assign(T, 0.0);
    }
};

}  // namespace uavopt
