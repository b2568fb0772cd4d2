#include "edl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edl {

void MlpArchitecture::validate() const {
    if (input_dim < 1) throw std::invalid_argument("MlpArchitecture: input_dim must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("MlpArchitecture: num_classes must be >= 2");
    for (int w : hidden_layers)
        if (w < 1) throw std::invalid_argument("MlpArchitecture: hidden layer width must be >= 1");
}

MlpArchitecture MlpArchitecture::preset(const std::string& name, int input_dim, int num_classes) {
    MlpArchitecture arch;
    arch.input_dim = input_dim;
    arch.num_classes = num_classes;
    if (name == "smaller") arch.hidden_layers = {32, 32};
    else if (name == "small") arch.hidden_layers = {64, 64};
    else if (name == "big") arch.hidden_layers.assign(8, 512);
    else if (name == "bigger") arch.hidden_layers.assign(8, 1024);
    else if (name == "linear") arch.hidden_layers = {};
    else throw std::invalid_argument("unknown MLP preset: " + name +
                                     " (expected smaller | small | big | bigger | linear)");
    arch.validate();
    return arch;
}

std::vector<std::pair<int, int>> MlpArchitecture::layer_shapes() const {
    std::vector<std::pair<int, int>> shapes;
    int in = input_dim;
    for (int width : hidden_layers) {
        shapes.emplace_back(width, in);
        in = width;
    }
    shapes.emplace_back(num_classes, in);
    return shapes;
}

std::size_t MlpArchitecture::parameter_count() const {
    std::size_t count = 0;
    for (auto [out, in] : layer_shapes()) count += static_cast<std::size_t>(out) * in + out;
    return count;
}

MlpParameters MlpParameters::init_he(const MlpArchitecture& arch, SeededRng& rng) {
    arch.validate();
    MlpParameters params;
    for (auto [out, in] : arch.layer_shapes()) {
        Matrix w(out, in);
        const double stddev = std::sqrt(2.0 / in);
        for (double& v : w.data()) v = stddev * rng.normal();
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(out, 0.0);
    }
    return params;
}

MlpParameters MlpParameters::zeros(const MlpArchitecture& arch) {
    arch.validate();
    MlpParameters params;
    for (auto [out, in] : arch.layer_shapes()) {
        params.weights.emplace_back(out, in);
        params.biases.emplace_back(out, 0.0);
    }
    return params;
}

void MlpParameters::check_shapes(const MlpArchitecture& arch) const {
    const auto shapes = arch.layer_shapes();
    if (weights.size() != shapes.size() || biases.size() != shapes.size())
        throw std::invalid_argument("MlpParameters: layer count mismatch");
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (weights[l].rows() != static_cast<std::size_t>(shapes[l].first) ||
            weights[l].cols() != static_cast<std::size_t>(shapes[l].second) ||
            biases[l].size() != static_cast<std::size_t>(shapes[l].first))
            throw std::invalid_argument("MlpParameters: shape mismatch at layer " +
                                        std::to_string(l));
    }
}

std::vector<double> MlpParameters::flatten() const {
    std::vector<double> flat;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.insert(flat.end(), weights[l].data().begin(), weights[l].data().end());
        flat.insert(flat.end(), biases[l].begin(), biases[l].end());
    }
    return flat;
}

MlpParameters MlpParameters::unflatten(const MlpArchitecture& arch, std::span<const double> flat) {
    if (flat.size() != arch.parameter_count())
        throw std::invalid_argument("MlpParameters::unflatten: size mismatch");
    MlpParameters params = zeros(arch);
    std::size_t pos = 0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        auto& data = params.weights[l].data();
        std::copy(flat.begin() + pos, flat.begin() + pos + data.size(), data.begin());
        pos += data.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + params.biases[l].size(),
                  params.biases[l].begin());
        pos += params.biases[l].size();
    }
    return params;
}

Matrix mlp_forward(const MlpArchitecture& arch, const MlpParameters& params,
                   const Matrix& features, MlpForwardCache* cache) {
    params.check_shapes(arch);
    if (features.cols() != static_cast<std::size_t>(arch.input_dim))
        throw std::invalid_argument("mlp_forward: feature dim " + std::to_string(features.cols()) +
                                    " != input_dim " + std::to_string(arch.input_dim));
    if (cache != nullptr) {
        cache->activations.clear();
        cache->activations.push_back(features);
        cache->revision = params.revision;
        cache->valid = true;
    }
    Matrix current = features;
    const std::size_t num_layers = params.weights.size();
    for (std::size_t l = 0; l < num_layers; ++l) {
        Matrix next;
        affine_forward(current, params.weights[l], params.biases[l], next);
        if (l + 1 < num_layers) {
            for (double& v : next.data()) v = std::max(v, 0.0);
            if (cache != nullptr) cache->activations.push_back(next);
        }
        current = std::move(next);
    }
    return current;
}

MlpGradients MlpGradients::zeros(const MlpArchitecture& arch) {
    MlpGradients g;
    for (auto [out, in] : arch.layer_shapes()) {
        g.weights.emplace_back(out, in);
        g.biases.emplace_back(out, 0.0);
    }
    return g;
}

double MlpGradients::squared_norm() const {
    double total = 0.0;
    for (const auto& w : weights)
        for (double v : w.data()) total += v * v;
    for (const auto& b : biases)
        for (double v : b) total += v * v;
    return total;
}

void MlpGradients::scale(double factor) {
    for (auto& w : weights)
        for (double& v : w.data()) v *= factor;
    for (auto& b : biases)
        for (double& v : b) v *= factor;
}

MlpGradients mlp_backward(const MlpArchitecture& arch, const MlpParameters& params,
                          const MlpForwardCache& cache, const Matrix& d_logits) {
    params.check_shapes(arch);
    if (!cache.valid || cache.revision != params.revision)
        throw std::invalid_argument("mlp_backward: stale forward cache (parameters changed "
                                    "since the forward pass)");
    const std::size_t num_layers = params.weights.size();
    if (cache.activations.size() != num_layers)
        throw std::invalid_argument("mlp_backward: cache depth mismatch");
    if (d_logits.rows() != cache.activations[0].rows() ||
        d_logits.cols() != static_cast<std::size_t>(arch.num_classes))
        throw std::invalid_argument("mlp_backward: d_logits shape mismatch");

    MlpGradients grads = MlpGradients::zeros(arch);
    Matrix upstream = d_logits;
    for (std::size_t l = num_layers; l-- > 0;) {
        const Matrix& input = cache.activations[l];
        Matrix d_input;
        affine_backward(input, params.weights[l], upstream, grads.weights[l], grads.biases[l],
                        l > 0 ? &d_input : nullptr);
        if (l > 0) {
            // ReLU mask from the stored post-activation values.
            for (std::size_t i = 0; i < d_input.data().size(); ++i)
                if (input.data()[i] <= 0.0) d_input.data()[i] = 0.0;
            upstream = std::move(d_input);
        }
    }
    return grads;
}

}  // namespace edl
