#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace poselab {

namespace detail {

// splitmix64 finalizer, used to derive child stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Seeded random generator. One instance fully determines a run.
//
// The engine is std::mt19937_64 (its output sequence is pinned by the
// standard), and all distributions are hand-rolled on top of the raw 64-bit
// stream, so results are bit-identical across standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform integer on the closed interval [lo, hi]. Rejection sampled.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
        if (span == 0) {  // full 64-bit range
            return static_cast<std::int64_t>(next_u64());
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Gaussian via Box-Muller with a cached spare.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        // u1 in (0, 1] so the log is finite.
        const double u1 =
            (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

    // Independent child stream. Children depend only on (seed, stream), not
    // on how far this generator has advanced, so worker partitions are
    // reproducible regardless of scheduling.
    SeededRng child(std::uint64_t stream) const {
        return SeededRng(detail::splitmix64(seed_ ^ detail::splitmix64(stream + 1)));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace poselab
