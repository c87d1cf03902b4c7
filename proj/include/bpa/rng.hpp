#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace bpa {

// Portable random stream. The draws are derived from raw mt19937_64 output so
// runs are reproducible across standard library implementations.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

// splitmix64, used to derive independent stream seeds from one base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct SeedSet {
    std::uint64_t env = 0;
    std::uint64_t learner = 1;
    std::uint64_t advisor = 2;
    std::uint64_t ppr = 3;

    static SeedSet derive(std::uint64_t base) {
        return SeedSet{mix_seed(base ^ 0x01), mix_seed(base ^ 0x02), mix_seed(base ^ 0x03),
                       mix_seed(base ^ 0x04)};
    }
};

// Four separately seeded streams, so that draws made on behalf of one
// component never shift the sequence seen by another.
struct RngSet {
    Rng env;
    Rng learner;
    Rng advisor;
    Rng ppr;

    RngSet() = default;
    explicit RngSet(const SeedSet& s) : env(s.env), learner(s.learner), advisor(s.advisor), ppr(s.ppr) {}
};

}  // namespace bpa
