#pragma once

#include <cmath>
#include <cstdint>
#include <array>

namespace uavopt {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Stateless: each (key, counter) block yields 4 independent 32-bit words,
// so draws indexed by (seed, k, i, n) are reproducible in any order.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    static Block generate(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                          std::uint32_t c2, std::uint32_t c3) {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        Block c{c0, c1, c2, c3};
        for (int r = 0; r < 10; ++r) {
            const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c[0];
            const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c = Block{hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return c;
    }

    // Uniform in (0,1); never returns an endpoint.
    static double to_unit(std::uint32_t w) {
        return (static_cast<double>(w) + 0.5) * (1.0 / 4294967296.0);
    }

    // Two standard normals from one block via Box-Muller.
    static std::array<double, 2> normals(std::uint64_t key, std::uint32_t c0,
                                         std::uint32_t c1, std::uint32_t c2,
                                         std::uint32_t c3) {
        const Block b = generate(key, c0, c1, c2, c3);
        const double u1 = to_unit(b[0]);
        const double u2 = to_unit(b[1]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * M_PI * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    static double uniform(std::uint64_t key, std::uint32_t c0, std::uint32_t c1,
                          std::uint32_t c2, std::uint32_t c3) {
        return to_unit(generate(key, c0, c1, c2, c3)[0]);
    }
};

}  // namespace uavopt
