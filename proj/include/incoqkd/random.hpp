#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace incoqkd {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a; stable across platforms, used for stream names and scenario hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Seed of the substream `(name, index)` below `master`. Pure function of its
/// arguments, so adding a stream never reshuffles the others.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                             std::uint64_t index = 0) noexcept;

/// Random stream owned by the caller. Uniform and geometric draws are built
/// from raw engine bits so they do not depend on the standard library's
/// distribution implementations.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
        return Rng(substream_seed(master, name, index));
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform in (0, 1].
    double uniform_open0() { return 1.0 - uniform(); }
    double normal(double mean = 0.0, double sigma = 1.0);
    /// Number of failures before the first success of a Bernoulli(p) process.
    std::uint64_t geometric(double p);

  private:
    std::mt19937_64 engine_;
};

}  // namespace incoqkd
