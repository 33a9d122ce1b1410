#pragma once

#include <cmath>
#include <cstdint>

namespace stshn {

// Counter-based deterministic generator. Every draw is a pure function of
// (seed, stream indices), so streams are reproducible regardless of call
// order and identical across platforms with 64-bit wraparound arithmetic.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                  std::uint64_t c = 0, std::uint64_t d = 0) {
    std::uint64_t s = mix64(seed);
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    s = mix64(s ^ c);
    s = mix64(s ^ d);
    return s;
}

// Uniform in [0, 1) with 53 bits of mantissa.
inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0, std::uint64_t d = 0) {
    return uniform01(counter_hash(seed, a, b, c, d));
}

// Inverse-CDF Poisson draw from a single uniform. Walks the CDF upward;
// capped so pathological rates cannot loop forever.
inline unsigned poisson_inverse_cdf(double lambda, double u) {
    if (lambda <= 0.0) return 0;
    double p = std::exp(-lambda) * 1.0;  // P(k=0)
    double cum = p;
    unsigned k = 0;
    const unsigned cap = 10000;
    while (u >= cum && k < cap) {
        ++k;
        p *= lambda / static_cast<double>(k);
        cum += p;
        if (p < 1e-300) break;
    }
    return k;
}

}  // namespace stshn
