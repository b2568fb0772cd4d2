#include "edl/datagen.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "edl/rng.hpp"

namespace edl {

TabularDataset gaussian_mixture(int num_points, int num_classes, double radius, double sigma,
                                std::uint64_t seed) {
    if (num_points < 1) throw std::invalid_argument("gaussian_mixture: num_points must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("gaussian_mixture: num_classes must be >= 2");
    if (!(radius > 0.0) || !(sigma >= 0.0))
        throw std::invalid_argument("gaussian_mixture: radius must be > 0, sigma >= 0");
    SeededRng rng(seed);
    TabularDataset data;
    data.num_classes = num_classes;
    data.features = Matrix(num_points, 2);
    data.labels.resize(num_points);
    std::vector<std::size_t> order(num_points);
    for (int i = 0; i < num_points; ++i) order[i] = i;
    rng.shuffle(order);
    for (int i = 0; i < num_points; ++i) {
        const int k = i % num_classes;
        const double angle = 2.0 * std::numbers::pi * k / num_classes;
        const std::size_t row = order[i];
        data.features.at(row, 0) = radius * std::cos(angle) + sigma * rng.normal();
        data.features.at(row, 1) = radius * std::sin(angle) + sigma * rng.normal();
        data.labels[row] = k;
    }
    return data;
}

TabularDataset two_spirals(int num_points, double noise, std::uint64_t seed) {
    if (num_points < 2) throw std::invalid_argument("two_spirals: num_points must be >= 2");
    if (!(noise >= 0.0)) throw std::invalid_argument("two_spirals: noise must be >= 0");
    SeededRng rng(seed);
    TabularDataset data;
    data.num_classes = 2;
    data.features = Matrix(num_points, 2);
    data.labels.resize(num_points);
    std::vector<std::size_t> order(num_points);
    for (int i = 0; i < num_points; ++i) order[i] = i;
    rng.shuffle(order);
    for (int i = 0; i < num_points; ++i) {
        const int k = i % 2;
        const double t = rng.next_double();
        const double r = 0.2 + 0.8 * t;
        const double theta = 3.0 * std::numbers::pi * t + (k == 0 ? 0.0 : std::numbers::pi);
        const std::size_t row = order[i];
        data.features.at(row, 0) = r * std::cos(theta) + noise * rng.normal();
        data.features.at(row, 1) = r * std::sin(theta) + noise * rng.normal();
        data.labels[row] = k;
    }
    return data;
}

}  // namespace edl
