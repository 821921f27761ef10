#include "clmac/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace clmac {

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below: empty range");
    }
    // Drop the 2^64 mod n lowest outputs so every residue is equally likely.
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x < threshold);
    return x % n;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw std::invalid_argument("Rng::uniform_int: hi < lo");
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(below(span));
}

double Rng::exponential(double mean) {
    // 1 - u lies in (0, 1], so the log is finite.
    return -mean * std::log1p(-uniform01());
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace clmac
