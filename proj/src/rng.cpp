#include "edl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace edl {

std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double SeededRng::gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("SeededRng::gamma: shape must be positive");
    if (shape < 1.0) {
        // Boost: if X ~ Gamma(shape+1) and U ~ Uniform(0,1],
        // then X * U^(1/shape) ~ Gamma(shape).
        const double x = gamma(shape + 1.0);
        const double u = next_open();
        return x * std::pow(u, 1.0 / shape);
    }
    // Marsaglia-Tsang.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = next_open();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> SeededRng::dirichlet(std::span<const double> alpha) {
    if (alpha.size() < 2) throw std::invalid_argument("SeededRng::dirichlet: need at least 2 components");
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        out[i] = gamma(alpha[i]);
        total += out[i];
    }
    if (total <= 0.0) {
        // All gamma draws underflowed (tiny shapes); fall back to the vertex
        // selected by the largest alpha so the output is still a distribution.
        std::size_t best = 0;
        for (std::size_t i = 1; i < alpha.size(); ++i)
            if (alpha[i] > alpha[best]) best = i;
        std::fill(out.begin(), out.end(), 0.0);
        out[best] = 1.0;
        return out;
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<std::size_t> SeededRng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace edl
