#pragma once

#include <cstdint>

#include "edl/simplex.hpp"

namespace edl {

/// K isotropic Gaussian clusters with means on a circle of the given radius;
/// labels are balanced and rows are shuffled.
TabularDataset gaussian_mixture(int num_points, int num_classes, double radius, double sigma,
                                std::uint64_t seed);

/// Two interleaved parametric spirals with additive Gaussian noise.
TabularDataset two_spirals(int num_points, double noise, std::uint64_t seed);

}  // namespace edl
