#pragma once

#include <cstdint>

namespace toothseg {

/// Deterministic 64-bit generator (splitmix64). All randomized operations in
/// the toolkit draw from this type so results are bit-stable across platforms
/// and runs. Parallel streams are derived with split(stream): stream i of
/// seed s is seeded with mix(s) ^ mix(i + golden), so (seed, index) pairs map
/// to independent streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi);

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal();

    Rng split(std::uint64_t stream) const;

private:
    std::uint64_t state_;
};

}  // namespace toothseg
