#pragma once

#include <cmath>
#include <cstdint>

#include "vecmath.hpp"

namespace cloudnn {

// PCG32: small, fast, reproducible across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed = 0, uint64_t stream = 0) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 0) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
    }

    // Uniform in [0, 1).
    double uniform() { return next_u32() * 0x1p-32; }

    // Uniform in [0, 1) with 53 usable bits.
    double uniform53() {
        uint64_t hi = next_u32(), lo = next_u32();
        return ((hi << 21) ^ lo) * 0x1p-53;
    }

    uint32_t uniform_int(uint32_t n) {  // [0, n)
        return static_cast<uint32_t>((static_cast<uint64_t>(next_u32()) * n) >> 32);
    }

    // Box-Muller; one value per call, pair cached.
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    Vec3 uniform_sphere() {
        double z = 1.0 - 2.0 * uniform();
        double phi = 2.0 * M_PI * uniform();
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    double cached_ = 0;
    bool has_cached_ = false;
};

// Mix (seed, index) into an independent stream key.
inline uint64_t hash_combine(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_stream(uint64_t seed, uint64_t index) {
    return Rng(hash_combine(seed, index), hash_combine(seed ^ 0x5bf03635ULL, index));
}

}  // namespace cloudnn
