#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace pretest {

// Named streams. Every random quantity in the library is drawn from
// (seed, stream, substream), so one seed replays a whole study.
enum class Stream : std::uint64_t {
    Population = 1,
    Assignment = 2,
    Permutation = 3,
    RefDist = 4,
};

struct RngKey {
    std::uint64_t seed = 0;
    Stream stream = Stream::Assignment;
    std::uint64_t substream = 0;

    RngKey child(std::uint64_t index) const;
};

// xoshiro256** seeded through SplitMix64. Uniform and normal variates are
// produced by hand-written transforms so draws are identical across
// standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);
    explicit Rng(const RngKey& key);
    Rng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1).
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Unbiased integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    // Standard normal (Marsaglia polar method).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_key(const RngKey& key);

}  // namespace pretest
