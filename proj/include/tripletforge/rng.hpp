#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace tripletforge {

// Counter-based splittable generator. Streams are derived by hashing a key
// sequence into the state, so parallel producers keyed by (seed, id, ...)
// draw from independent, reproducible streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

    static Rng fork(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
        std::uint64_t s = mix(seed ^ kGolden);
        for (std::uint64_t k : keys) s = mix(s ^ mix(k + kGolden));
        return Rng(s, Tag{});
    }

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Signed uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int_range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second variate is dropped so the
    // stream position is a pure function of the draw count.
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

private:
    struct Tag {};
    Rng(std::uint64_t raw_state, Tag) : state_(raw_state) {}

    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace tripletforge
