#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pzsl {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Seeded, splittable generator. Child streams are derived from (seed, stream id)
/// so independent consumers never share state and runs are reproducible per seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    Rng split(std::uint64_t stream) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(stream + 0x632BE59BD9B4E019ULL)));
    }

    std::mt19937_64& engine() noexcept { return engine_; }

    /// Uniform in the open interval (0, 1).
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform_open() < p; }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    /// Standard Gumbel(0, 1) draw: -log(-log(u)).
    double gumbel() { return -std::log(-std::log(uniform_open())); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace pzsl
