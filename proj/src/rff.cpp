#include "edl/rff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "edl/losses.hpp"
#include "edl/simplex.hpp"

namespace edl {

RffFeatureMap RffFeatureMap::make(int num_features, int input_dim, SeededRng& rng) {
    if (num_features < 1 || input_dim < 1)
        throw std::invalid_argument("RffFeatureMap: dimensions must be positive");
    RffFeatureMap map;
    map.projection = Matrix(num_features, input_dim);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(num_features));
    for (double& v : map.projection.data()) v = stddev * rng.normal();
    map.phase.resize(num_features);
    for (double& b : map.phase) b = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return map;
}

Matrix rff_transform(const RffFeatureMap& map, const Matrix& features) {
    if (features.cols() != static_cast<std::size_t>(map.input_dim()))
        throw std::invalid_argument("rff_transform: feature dim mismatch");
    Matrix out;
    affine_forward(features, map.projection, map.phase, out);
    for (double& v : out.data()) v = std::cos(v);
    return out;
}

namespace {

struct HeadEval {
    double objective = 0.0;
    MlpGradients grads;
};

HeadEval evaluate_head(const MlpArchitecture& arch, const MlpParameters& params,
                       const Matrix& phi, std::span<const int> labels, double l2) {
    const std::size_t n = phi.rows();
    const int c_count = arch.num_classes;
    MlpForwardCache cache;
    const Matrix logits = mlp_forward(arch, params, phi, &cache);
    Matrix d_logits(n, c_count);
    std::vector<double> probs(c_count);
    std::vector<double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        softmax_into(logits.row(i), probs);
        losses[i] = point_loss(LossKind::cross_entropy(), probs, labels[i]);
        double* g = d_logits.row(i).data();
        for (int c = 0; c < c_count; ++c)
            g[c] = (probs[c] - (c == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
    HeadEval eval;
    eval.objective = pairwise_mean(losses);
    eval.grads = mlp_backward(arch, params, cache, d_logits);
    if (l2 > 0.0) {
        double penalty = 0.0;
        for (std::size_t l = 0; l < params.weights.size(); ++l) {
            const auto& w = params.weights[l].data();
            auto& gw = eval.grads.weights[l].data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                penalty += w[i] * w[i];
                gw[i] += l2 * w[i];
            }
        }
        eval.objective += 0.5 * l2 * penalty;
    }
    return eval;
}

}  // namespace

RffHeadFit fit_rff_head(const Matrix& transformed, std::span<const int> labels, int num_classes,
                        const RffHeadConfig& cfg) {
    if (transformed.rows() != labels.size())
        throw std::invalid_argument("fit_rff_head: label count mismatch");
    if (transformed.rows() == 0) throw std::invalid_argument("fit_rff_head: empty dataset");
    MlpArchitecture arch{static_cast<int>(transformed.cols()), {}, num_classes};
    arch.validate();

    RffHeadFit fit;
    fit.params = MlpParameters::zeros(arch);
    HeadEval eval = evaluate_head(arch, fit.params, transformed, labels, cfg.l2);
    double step = cfg.learning_rate;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        double inf_norm = 0.0;
        for (const auto& w : eval.grads.weights)
            for (double v : w.data()) inf_norm = std::max(inf_norm, std::abs(v));
        for (const auto& b : eval.grads.biases)
            for (double v : b) inf_norm = std::max(inf_norm, std::abs(v));
        fit.final_grad_norm = inf_norm;
        fit.iterations = iter;
        if (inf_norm < cfg.grad_tol) {
            fit.converged = true;
            return fit;
        }
        const double grad_sq = eval.grads.squared_norm();
        // Armijo backtracking along the steepest-descent direction.
        double t = step;
        for (int back = 0; back < 60; ++back) {
            MlpParameters trial = fit.params;
            for (std::size_t l = 0; l < trial.weights.size(); ++l) {
                auto& w = trial.weights[l].data();
                const auto& gw = eval.grads.weights[l].data();
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= t * gw[i];
                for (std::size_t i = 0; i < trial.biases[l].size(); ++i)
                    trial.biases[l][i] -= t * eval.grads.biases[l][i];
            }
            trial.revision = fit.params.revision + 1;
            HeadEval trial_eval = evaluate_head(arch, trial, transformed, labels, cfg.l2);
            if (trial_eval.objective <= eval.objective - 1e-4 * t * grad_sq) {
                fit.params = std::move(trial);
                eval = std::move(trial_eval);
                step = t * 2.0;  // allow the step to grow back
                break;
            }
            t *= 0.5;
            if (back == 59)
                throw std::runtime_error("fit_rff_head: line search failed to make progress");
        }
    }
    fit.iterations = cfg.max_iters;
    return fit;
}

}  // namespace edl
