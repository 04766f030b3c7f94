#pragma once

#include <cmath>
#include <cstdint>

namespace hdn {

// splitmix64: the seeding/stream-derivation hash used everywhere. All
// stochastic operations derive independent streams from (seed, tags...) so
// there is no hidden global RNG state.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (0x9E3779B97F4A7C15ULL + b + (a << 6) + (a >> 2)));
}

template <typename... Rest>
inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return hash_combine(hash_combine(a, b), static_cast<std::uint64_t>(rest)...);
}

inline std::uint64_t hash_str(std::uint64_t seed, const char* tag) {
    std::uint64_t h = seed;
    for (const char* p = tag; *p; ++p) h = splitmix64(h ^ static_cast<std::uint64_t>(*p));
    return h;
}

// xoshiro256** — small, fast, reproducible across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s_) {
            x = splitmix64(x);
            si = x;
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in (0,1] — never exactly zero, safe for log().
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller without caching; deterministic call sequence.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Counter-based standard-normal field: the draw at a given (stream, counter)
// pair depends only on those values. Latent noise is anchored to absolute
// pixel coordinates through this, which is what makes tiled inference agree
// with whole-image inference in tile interiors.
inline double gauss_at(std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h1 = splitmix64(stream ^ splitmix64(counter));
    std::uint64_t h2 = splitmix64(h1 ^ 0xD1B54A32D192ED03ULL);
    double u1 = (static_cast<double>(h1 >> 11) + 1.0) * 0x1.0p-53;
    double u2 = (static_cast<double>(h2 >> 11) + 1.0) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

} // namespace hdn
