#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace n2n {

// Deterministic, platform-independent generator (splitmix64 core).
// All randomness in the project flows through this type so that seeds
// reproduce bit-identical streams everywhere. Streams can be forked by
// (seed, stream) pairs, which is how training resumes mid-run without
// serializing generator state: the stream id is derived from the
// iteration counter.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : state_(seed + GOLDEN) {}

    static Rng fork(uint64_t seed, uint64_t stream) {
        Rng r(seed);
        r.state_ ^= mix(stream + GOLDEN);
        r.next();
        return r;
    }

    uint64_t next() {
        state_ += GOLDEN;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; deterministic given the stream.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // k distinct indices drawn without replacement from [0, n), in draw order.
    std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k) {
        std::vector<uint32_t> idx(n);
        for (uint32_t i = 0; i < n; ++i) idx[i] = i;
        for (uint32_t i = 0; i < k; ++i) {
            const uint32_t j = i + static_cast<uint32_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

  private:
    static constexpr uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace n2n
