#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace sm {

/// Seedable counter-style generator (xoshiro256++ seeded via splitmix64).
/// All randomness in the project flows through explicitly passed handles,
/// so runs are reproducible bit-for-bit from the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (pair cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);

    /// Derive an independent stream; used for per-epoch / per-utterance seeds.
    Rng spawn(std::uint64_t stream_id) const;

    std::string state_hex() const;
    void restore_hex(const std::string& hex);

private:
    std::array<std::uint64_t, 4> s_{};
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
    std::uint64_t seed_ = 0;
};

}  // namespace sm
