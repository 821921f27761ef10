#pragma once

#include <cstdint>
#include <random>

namespace clmac {

// Seeded generator with draws defined in terms of raw engine output only.
// The std:: distributions are implementation-defined, which would make runs
// differ between standard libraries.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    // Uniform integer on [0, n), unbiased. n must be positive.
    std::uint64_t below(std::uint64_t n);
    // Uniform integer on [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform01() < p; }
    double exponential(double mean);

private:
    std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent stream seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace clmac
