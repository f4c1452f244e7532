#pragma once

// Pinned random number generation. Trajectories must be reproducible across
// compilers and standard libraries, so no std:: distribution is used: uniforms
// are built from the top 53 bits of std::mt19937_64, whose output sequence is
// fixed by the standard.

#include <cstdint>
#include <random>
#include <string_view>

#include "urq/kernels.hpp"

namespace urq {

inline constexpr std::string_view kRngIdentity = "mt19937_64;u53=(next>>11)*2^-53;streams=splitmix64";

/// SplitMix64 step, used only to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of replication `index` under master seed `master`: the (index+1)-th
/// SplitMix64 output started from `master`.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) noexcept {
    std::uint64_t state = master;
    std::uint64_t out = 0;
    for (std::uint64_t i = 0; i <= index; ++i) out = splitmix64(state);
    return out;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Successor drawn from a transition row by inversion in row order.
    const State& sample(const TransitionRow& row) noexcept {
        const double u = uniform();
        double acc = 0.0;
        for (const auto& t : row) {
            acc += t.prob;
            if (u < acc) return t.to;
        }
        // u landed in the rounding gap of the cumulative sum
        return (row.end() - 1)->to;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace urq
