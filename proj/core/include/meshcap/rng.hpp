#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace meshcap {

// Deterministic RNG used everywhere randomness appears (init, shuffling).
// mt19937_64 has a standard-pinned output sequence; the distributions below
// are hand-rolled so runs reproduce bit-for-bit regardless of toolchain.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; the spare value is discarded so the draw count per call is
    // fixed.
    double normal(double mean, double stddev);

    // Uniform in [0, n). Plain modulo; bias is irrelevant here, determinism is
    // the contract.
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace meshcap
