#pragma once

#include <cstdint>
#include <random>

namespace riskdrive {

// Seeded generator with explicit bit-to-double mapping. std::mt19937_64's
// integer stream is fully specified by the standard; the standard
// distributions are not, so uniform mapping is done here to keep traces
// bit-identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi]; degenerate bounds return lo
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) {
        // rejection sampling keeps the distribution exact
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // derive an independent child stream
    Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
};

}  // namespace riskdrive
