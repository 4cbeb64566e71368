#include "incoqkd/random.hpp"

#include <cmath>
#include <limits>

namespace incoqkd {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                             std::uint64_t index) noexcept {
    std::uint64_t k = splitmix64(master);
    k = splitmix64(k ^ fnv1a64(name));
    return splitmix64(k ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double Rng::normal(double mean, double sigma) {
    // Box-Muller on our own uniforms keeps draws platform-independent.
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::geometric(double p) {
    if (p >= 1.0) return 0;
    if (p <= 0.0) return std::numeric_limits<std::uint64_t>::max();
    const double g = std::floor(std::log(uniform_open0()) / std::log1p(-p));
    if (g >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(g);
}

}  // namespace incoqkd
