#pragma once

#include <span>
#include <vector>

#include "edl/common.hpp"
#include "edl/mlp.hpp"
#include "edl/rng.hpp"

namespace edl {

/// Frozen random Fourier features x -> cos(Wx + b) with W ~ N(0, 1/D)
/// (D = num_features) and b ~ Uniform[0, 2*pi).
struct RffFeatureMap {
    Matrix projection;          // num_features x input_dim
    std::vector<double> phase;  // num_features

    static RffFeatureMap make(int num_features, int input_dim, SeededRng& rng);
    int num_features() const { return static_cast<int>(projection.rows()); }
    int input_dim() const { return static_cast<int>(projection.cols()); }
};

/// Elementwise cos(Wx + b); output entries lie in [-1, 1].
Matrix rff_transform(const RffFeatureMap& map, const Matrix& features);

struct RffHeadConfig {
    double l2 = 1e-2;           // penalty on weights (biases unpenalized)
    double learning_rate = 1.0; // initial step for the backtracking search
    int max_iters = 50000;
    double grad_tol = 1e-6;     // infinity norm of the full gradient
};

struct RffHeadFit {
    MlpParameters params;  // single affine layer (C x D weights + C biases)
    double final_grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Multinomial logistic regression on transformed features, trained by
/// full-batch gradient descent with Armijo backtracking. The objective is
/// mean cross entropy plus (l2/2) * ||W||^2, convex in the parameters.
RffHeadFit fit_rff_head(const Matrix& transformed, std::span<const int> labels, int num_classes,
                        const RffHeadConfig& cfg = {});

}  // namespace edl
