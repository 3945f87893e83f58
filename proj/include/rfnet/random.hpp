#pragma once

#include <cmath>
#include <cstdint>

namespace rfnet {

// Counter-based 64-bit generator: the splitmix64 finalizer applied to an
// incrementing counter. Every stream is fully determined by its seed, and
// substreams can be forked by tag without sharing state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : counter_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (counter_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes two uniforms per call so the stream layout is fixed.
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Independent substream for (seed, tag) pairs.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t z = counter_ ^ (0xD1B54A32D192ED03ull * (tag + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

private:
    std::uint64_t counter_;
};

}  // namespace rfnet
