#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace ncm {

/// Deterministic random stream. Wraps std::mt19937_64 (fully specified by
/// the standard) and generates normals itself so that sequences are
/// bit-identical across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Generates pairs; caches the second.
    double normal();

    std::complex<double> complex_normal() {
        double re = normal();
        double im = normal();
        return {re, im};
    }

    /// Derives an independent sub-stream from (seed, index), for
    /// per-trajectory generation that is order-independent.
    static Rng child(std::uint64_t seed, std::uint64_t index);

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 step, used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

} // namespace ncm
