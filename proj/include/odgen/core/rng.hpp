#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace odgen {

// splitmix64 stream. Self-contained so that sampling is bit-reproducible
// across standard libraries and platforms; std::normal_distribution is
// implementation-defined and would break that.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // standard normal via Box-Muller; both uniforms are always consumed so the
    // stream position does not depend on values drawn
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

    // Independent stream derived from the original seed and an index; used to
    // give parallel tasks their own reproducible streams.
    Rng substream(uint64_t idx) const {
        uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull * (idx + 1));
        z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 32)) * 0xC4CEB9FE1A85EC53ull;
        return Rng(z ^ (z >> 29));
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    uint64_t state_;
};

}  // namespace odgen
