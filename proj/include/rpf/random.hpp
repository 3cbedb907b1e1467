#pragma once

#include <cmath>
#include <cstdint>

namespace rpf {

namespace detail {

// Finalizer from splitmix64 (Steele, Lea & Flood; Vigna's fixed-increment
// variant). Also used standalone to derive sub-seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic random stream identified by (seed, stream id). Every draw is a
// pure function of (seed, stream, draw counter), so distinct streams can be
// consumed on different threads and still reproduce bit-exactly for any
// schedule. Distinct stream ids start at unrelated points of the splitmix64
// cycle.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : state_(detail::mix64(seed + 0x9E3779B97F4A7C15ULL) ^
                 detail::mix64(stream ^ 0x2545F4914F6CDD1DULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(state_);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, bound), bias-free via rejection. bound must be >= 1.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller, two uniforms per draw.
    double next_normal() {
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();  // log(0) guard
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace rpf
