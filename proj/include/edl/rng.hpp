#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace edl {

/// Deterministic random stream built on the SplitMix64 generator.
///
/// The generator is fixed by specification: identical seeds produce
/// bit-identical streams on every platform, which is why none of the
/// <random> distributions are used here (their outputs are
/// implementation-defined). Variates are derived as follows:
///   - uniform doubles: top 53 bits of the next word, scaled by 2^-53
///   - normals: Box-Muller transform of two uniforms (second value cached)
///   - gamma: Marsaglia-Tsang squeeze for shape >= 1, with the
///     Gamma(shape+1) * U^(1/shape) boost for shape < 1
/// Child streams are derived from the construction seed and a stream
/// index, so per-member/per-cell substreams do not depend on draw order.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1]; safe for logarithms.
    double next_open() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Unbiased uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal via Box-Muller.
    double normal();

    /// Gamma(shape, scale=1), shape > 0.
    double gamma(double shape);

    /// Dirichlet draw via normalized per-coordinate gamma variates.
    std::vector<double> dirichlet(std::span<const double> alpha);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Sample k distinct indices from [0, n) without replacement (partial shuffle).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    /// Independent substream identified by (construction seed, index).
    SeededRng child(std::uint64_t index) const {
        return SeededRng(mix(seed_ ^ mix(0xD1B54A32D192ED03ull * (index + 1))));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace edl
