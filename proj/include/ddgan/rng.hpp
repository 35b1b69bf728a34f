#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ddgan {

// Seeded xoshiro256++ stream with hierarchical forking. A fork is derived
// from the parent's seed and a tag path, never from its consumption state,
// so substreams stay stable under refactors of the draw order.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();

    // Standard normal via Box-Muller; two uniforms per value, no caching,
    // so the stream position is a pure function of the draw count.
    double normal();
    void fill_normal(std::vector<double>& out);

    // Count of normal values handed out; used by sampling-cost assertions.
    std::uint64_t normal_count() const { return normal_count_; }

    // Child stream keyed by (seed, a, b).
    Rng fork(std::uint64_t a, std::uint64_t b = 0) const;

    // State serialization for checkpoints.
    std::array<std::uint64_t, 6> state() const;
    static Rng from_state(const std::array<std::uint64_t, 6>& st);

private:
    Rng() = default;
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t normal_count_ = 0;
};

}  // namespace ddgan
