#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "risfed/core.hpp"

namespace risfed {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// xoshiro256++ with an explicitly specified update so that every stream is
// reproducible bit-for-bit regardless of platform or standard library.
// Distributions are implemented here for the same reason: std:: ones are
// not pinned by the standard.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) {
            x = splitmix64(x);
            w = x;
        }
    }

    uint64_t next() {
        auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 random mantissa bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes two uniforms per value.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Circularly symmetric complex normal with unit total variance
    // (each component has variance 1/2).
    cplx cnormal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-std::log(u1));
        return {r * std::cos(2.0 * kPi * u2), r * std::sin(2.0 * kPi * u2)};
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

  private:
    uint64_t s_[4];
};

struct RngStream {
    std::string stream_id;
    uint64_t derived_seed = 0;

    Rng rng() const { return Rng(derived_seed); }
};

// Pure function of (master_seed, stream_id). splitmix64 is a bijection and
// the odd-constant multiply is invertible mod 2^64, so for a fixed master
// seed two stream ids collide only if their FNV-1a hashes collide.
inline RngStream derive_stream(uint64_t master_seed, std::string_view stream_id) {
    uint64_t h = fnv1a64(stream_id);
    uint64_t derived = splitmix64(master_seed ^ (h * 0x9E3779B97F4A7C15ULL));
    return RngStream{std::string(stream_id), derived};
}

}  // namespace risfed
