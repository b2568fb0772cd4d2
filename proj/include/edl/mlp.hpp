#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edl/common.hpp"
#include "edl/rng.hpp"

namespace edl {

/// Fully-connected ReLU network ending in an affine layer to C logits.
/// An empty hidden_layers list gives a plain linear (affine) classifier.
struct MlpArchitecture {
    int input_dim = 0;
    std::vector<int> hidden_layers;
    int num_classes = 0;

    void validate() const;

    /// Named size presets: smaller (2x32), small (2x64), big (8x512),
    /// bigger (8x1024).
    static MlpArchitecture preset(const std::string& name, int input_dim, int num_classes);

    /// (output, input) shape of each affine layer, hidden layers first.
    std::vector<std::pair<int, int>> layer_shapes() const;
    std::size_t parameter_count() const;
};

struct MlpParameters {
    std::vector<Matrix> weights;              // (out x in) per layer
    std::vector<std::vector<double>> biases;  // out per layer
    std::uint64_t revision = 0;               // bumped on every update

    /// He-scaled normal weights (stddev sqrt(2 / fan_in)), zero biases.
    static MlpParameters init_he(const MlpArchitecture& arch, SeededRng& rng);
    static MlpParameters zeros(const MlpArchitecture& arch);

    void check_shapes(const MlpArchitecture& arch) const;
    std::vector<double> flatten() const;
    static MlpParameters unflatten(const MlpArchitecture& arch, std::span<const double> flat);
};

/// Inputs and post-ReLU activations captured by mlp_forward; consumed by
/// mlp_backward. The revision ties the cache to the exact parameter state.
struct MlpForwardCache {
    std::vector<Matrix> activations;  // [0] = input batch, then hidden outputs
    std::uint64_t revision = 0;
    bool valid = false;
};

/// Batch forward pass: features (B x input_dim) -> logits (B x C).
Matrix mlp_forward(const MlpArchitecture& arch, const MlpParameters& params,
                   const Matrix& features, MlpForwardCache* cache = nullptr);

struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    static MlpGradients zeros(const MlpArchitecture& arch);
    double squared_norm() const;
    void scale(double factor);
};

/// Reverse-mode gradients of sum(d_logits . logits) with respect to all
/// parameters. Throws if the cache does not match the parameter revision.
MlpGradients mlp_backward(const MlpArchitecture& arch, const MlpParameters& params,
                          const MlpForwardCache& cache, const Matrix& d_logits);

}  // namespace edl
