#include "edl/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "edl/io.hpp"
#include "edl/losses.hpp"

namespace edl {

void OptimizerConfig::validate() const {
    // learning_rate 0 is allowed and freezes the parameters
    if (!(learning_rate >= 0.0))
        throw std::invalid_argument("OptimizerConfig: learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
    if (!(step_factor > 0.0 && step_factor <= 1.0))
        throw std::invalid_argument("OptimizerConfig: step factor must lie in (0, 1]");
    if (warmup_epochs < 0) throw std::invalid_argument("OptimizerConfig: warmup_epochs must be >= 0");
    for (std::size_t i = 1; i < milestones.size(); ++i)
        if (milestones[i] <= milestones[i - 1])
            throw std::invalid_argument("OptimizerConfig: milestones must be strictly increasing");
}

double OptimizerConfig::lr_at(int epoch, int total_epochs) const {
    switch (schedule) {
        case Schedule::Constant:
            return learning_rate;
        case Schedule::Step: {
            double lr = learning_rate;
            for (int m : milestones)
                if (epoch >= m) lr *= step_factor;
            return lr;
        }
        case Schedule::Cosine: {
            if (epoch < warmup_epochs)
                return learning_rate * (epoch + 1) / static_cast<double>(warmup_epochs);
            const int span = std::max(1, total_epochs - warmup_epochs);
            const double t = static_cast<double>(epoch - warmup_epochs) / span;
            return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * t));
        }
    }
    return learning_rate;
}

void SplitFractions::validate() const {
    if (!(train > 0.0) || !(val >= 0.0) || !(test >= 0.0))
        throw std::invalid_argument("SplitFractions: fractions must be non-negative, train > 0");
    if (std::abs(train + val + test - 1.0) > 1e-9)
        throw std::invalid_argument("SplitFractions: fractions must sum to 1");
}

void TrainRunConfig::validate() const {
    objective.validate();
    if (num_members < 1) throw std::invalid_argument("TrainRunConfig: num_members must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainRunConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainRunConfig: batch_size must be >= 1");
    if (early_stopping.patience < 1)
        throw std::invalid_argument("TrainRunConfig: early stopping patience must be >= 1");
    if (!member_seeds.empty() && static_cast<int>(member_seeds.size()) != num_members)
        throw std::invalid_argument("TrainRunConfig: member_seeds must have num_members entries");
    splits.validate();
    optimizer.validate();
}

DataSplits split_dataset(const TabularDataset& data, const SplitFractions& fractions,
                         SeededRng& rng) {
    fractions.validate();
    data.validate();
    const std::size_t n = data.features.rows();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::round(fractions.train * n));
    const auto n_val = static_cast<std::size_t>(std::round(fractions.val * n));
    if (n_train == 0 || n_train + n_val > n)
        throw std::invalid_argument("split_dataset: fractions leave an empty split");
    DataSplits splits;
    splits.train = data.subset(std::span(order).subspan(0, n_train));
    splits.val = data.subset(std::span(order).subspan(n_train, n_val));
    splits.test = data.subset(std::span(order).subspan(n_train + n_val));
    return splits;
}

Matrix EnsembleModel::transform(const Matrix& features) const {
    return feature_map ? rff_transform(*feature_map, features) : features;
}

Matrix EnsembleModel::member_probs(int member, const Matrix& features) const {
    const Matrix logits = mlp_forward(arch, members[member], transform(features));
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t n = 0; n < logits.rows(); ++n) softmax_into(logits.row(n), probs.row(n));
    return probs;
}

PredictionSet EnsembleModel::predict(const Matrix& features, const std::vector<int>* labels) const {
    const Matrix phi = transform(features);
    PredictionSet preds(static_cast<int>(members.size()), static_cast<int>(features.rows()),
                        arch.num_classes);
    for (std::size_t m = 0; m < members.size(); ++m) {
        const Matrix logits = mlp_forward(arch, members[m], phi);
        for (std::size_t n = 0; n < logits.rows(); ++n)
            softmax_into(logits.row(n), preds.row(static_cast<int>(m), static_cast<int>(n)));
    }
    if (labels != nullptr) preds.set_labels(*labels);
    return preds;
}

namespace {

/// AdamW (decoupled weight decay) or SGD with momentum (coupled L2).
class Optimizer {
  public:
    Optimizer(const OptimizerConfig& cfg, const MlpArchitecture& arch)
        : cfg_(cfg), m_(MlpGradients::zeros(arch)), v_(MlpGradients::zeros(arch)) {}

    void step(MlpParameters& params, const MlpGradients& grads, double lr) {
        ++t_;
        if (cfg_.variant == OptimizerConfig::Variant::AdamW) {
            const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
            const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
            for (std::size_t l = 0; l < params.weights.size(); ++l) {
                update_adamw(params.weights[l].data(), grads.weights[l].data(),
                             m_.weights[l].data(), v_.weights[l].data(), lr, bc1, bc2, true);
                update_adamw(params.biases[l], grads.biases[l], m_.biases[l], v_.biases[l], lr,
                             bc1, bc2, false);
            }
        } else {
            for (std::size_t l = 0; l < params.weights.size(); ++l) {
                update_sgd(params.weights[l].data(), grads.weights[l].data(),
                           m_.weights[l].data(), lr, true);
                update_sgd(params.biases[l], grads.biases[l], m_.biases[l], lr, false);
            }
        }
        ++params.revision;
    }

  private:
    void update_adamw(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v, double lr, double bc1, double bc2, bool decay) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            if (decay) p[i] -= lr * cfg_.weight_decay * p[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
        }
    }

    void update_sgd(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    double lr, bool decay) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double grad = g[i] + (decay ? cfg_.weight_decay * p[i] : 0.0);
            m[i] = cfg_.momentum * m[i] + grad;
            p[i] -= lr * m[i];
        }
    }

    OptimizerConfig cfg_;
    MlpGradients m_;
    MlpGradients v_;
    long t_ = 0;
};

double validation_avg_loss(const MlpArchitecture& arch, const std::vector<MlpParameters>& members,
                           const Matrix& phi, std::span<const int> labels, const LossKind& loss) {
    const std::size_t n = phi.rows();
    if (n == 0) return 0.0;
    std::vector<double> probs(arch.num_classes);
    std::vector<double> totals(n, 0.0);
    for (const auto& params : members) {
        const Matrix logits = mlp_forward(arch, params, phi);
        for (std::size_t i = 0; i < n; ++i) {
            softmax_into(logits.row(i), probs);
            totals[i] += point_loss(loss, probs, labels[i]);
        }
    }
    for (double& t : totals) t /= static_cast<double>(members.size());
    return pairwise_mean(totals);
}

TrainedEnsemble run_training(const MlpArchitecture& arch,
                             const std::optional<RffFeatureMap>& feature_map,
                             const DataSplits& splits, TrainRunConfig config) {
    config.validate();
    arch.validate();
    splits.train.validate();
    if (splits.train.num_features() !=
        (feature_map ? feature_map->input_dim() : arch.input_dim))
        throw std::invalid_argument("train: dataset feature dim does not match the model input");

    const int m_count = config.num_members;
    const int c_count = arch.num_classes;
    SeededRng root(config.seed);

    TrainedEnsemble result;
    result.model.feature_map = feature_map;
    result.model.arch = arch;
    result.model.seed = config.seed;

    const Matrix phi_train = result.model.transform(splits.train.features);
    const Matrix phi_val = result.model.transform(splits.val.features);

    for (int m = 0; m < m_count; ++m) {
        const std::uint64_t member_seed =
            config.member_seeds.empty() ? root.child(m + 1).seed() : config.member_seeds[m];
        SeededRng init_rng(member_seed);
        result.model.members.push_back(MlpParameters::init_he(arch, init_rng));
    }

    const bool clip = config.clip_gradients || config.objective.gamma < -0.9;
    SeededRng shuffle_rng = root.child(0);
    std::vector<Optimizer> optimizers;
    for (int m = 0; m < m_count; ++m) optimizers.emplace_back(config.optimizer, arch);

    const std::size_t n_train = phi_train.rows();
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    std::vector<MlpParameters> best_members = result.model.members;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int stale_epochs = 0;

    std::vector<Matrix> member_logits(m_count);
    std::vector<Matrix> member_dlogits(m_count);
    std::vector<MlpForwardCache> caches(m_count);
    std::vector<double> zbuf(static_cast<std::size_t>(m_count) * c_count);
    std::vector<double> gbuf(zbuf.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.optimizer.lr_at(epoch, config.epochs);
        shuffle_rng.shuffle(order);
        const std::vector<MlpParameters> epoch_start = result.model.members;

        double sum_objective = 0.0, sum_avg = 0.0, sum_div = 0.0;
        bool failed = false;
        for (std::size_t start = 0; start < n_train && !failed; start += config.batch_size) {
            const std::size_t batch = std::min<std::size_t>(config.batch_size, n_train - start);
            Matrix x(batch, phi_train.cols());
            std::vector<int> y(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                const std::size_t src = order[start + i];
                std::copy(phi_train.row(src).begin(), phi_train.row(src).end(), x.row(i).begin());
                y[i] = splits.train.labels[src];
            }
            for (int m = 0; m < m_count; ++m) {
                member_logits[m] = mlp_forward(arch, result.model.members[m], x, &caches[m]);
                member_dlogits[m] = Matrix(batch, c_count);
            }
            try {
                for (std::size_t i = 0; i < batch; ++i) {
                    for (int m = 0; m < m_count; ++m)
                        std::copy(member_logits[m].row(i).begin(), member_logits[m].row(i).end(),
                                  zbuf.begin() + static_cast<std::size_t>(m) * c_count);
                    const ObjectiveParts parts = objective_gradient(
                        config.objective, PointView{zbuf, m_count, c_count}, y[i], gbuf);
                    sum_objective += parts.objective;
                    sum_avg += parts.avg_loss;
                    sum_div += parts.diversity;
                    const double inv_batch = 1.0 / static_cast<double>(batch);
                    for (int m = 0; m < m_count; ++m) {
                        double* dst = member_dlogits[m].row(i).data();
                        const double* src = gbuf.data() + static_cast<std::size_t>(m) * c_count;
                        for (int c = 0; c < c_count; ++c) dst[c] = src[c] * inv_batch;
                    }
                }
            } catch (const std::exception&) {
                // Non-finite objective or logits: divergence, not a bug; the
                // shapes fed to objective_gradient are correct by construction.
                failed = true;
                break;
            }
            for (int m = 0; m < m_count; ++m) {
                MlpGradients grads =
                    mlp_backward(arch, result.model.members[m], caches[m], member_dlogits[m]);
                if (clip) {
                    const double norm = std::sqrt(grads.squared_norm());
                    if (norm > config.clip_norm) grads.scale(config.clip_norm / norm);
                }
                optimizers[m].step(result.model.members[m], grads, lr);
            }
        }
        if (failed || !std::isfinite(sum_objective)) {
            result.model.members = epoch_start;  // last finite state
            result.diverged = true;
            break;
        }

        EpochStats stats;
        stats.objective = sum_objective / static_cast<double>(n_train);
        stats.avg_loss = sum_avg / static_cast<double>(n_train);
        stats.diversity = sum_div / static_cast<double>(n_train);
        stats.val_metric = validation_avg_loss(arch, result.model.members, phi_val,
                                               splits.val.labels, config.objective.loss);
        result.history.push_back(stats);

        if (stats.val_metric < best_val) {
            best_val = stats.val_metric;
            best_epoch = epoch;
            best_members = result.model.members;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
        }
        if (config.early_stopping.enabled && stale_epochs >= config.early_stopping.patience) break;
    }

    if (best_epoch >= 0) {
        result.model.members = best_members;
        result.best_epoch = best_epoch;
        result.best_val_metric = best_val;
    }
    result.train_preds = result.model.predict(splits.train.features, &splits.train.labels);
    if (splits.val.num_points() > 0)
        result.val_preds = result.model.predict(splits.val.features, &splits.val.labels);
    if (splits.test.num_points() > 0)
        result.test_preds = result.model.predict(splits.test.features, &splits.test.labels);
    return result;
}

}  // namespace

TrainedEnsemble train_joint(const MlpArchitecture& arch,
                            const std::optional<RffFeatureMap>& feature_map,
                            const DataSplits& splits, const TrainRunConfig& config) {
    return run_training(arch, feature_map, splits, config);
}

TrainedEnsemble train_independent(const MlpArchitecture& arch,
                                  const std::optional<RffFeatureMap>& feature_map,
                                  const DataSplits& splits, const TrainRunConfig& config) {
    // With gamma = 0 the coupling term vanishes and the shared-batch joint
    // loop decomposes into M per-member optimizations.
    TrainRunConfig independent = config;
    independent.objective.gamma = 0.0;
    return run_training(arch, feature_map, splits, independent);
}

void dump_predictions(const EnsembleModel& ensemble, const TabularDataset& data,
                      const std::filesystem::path& csv_path, const std::string& tag,
                      std::optional<double> gamma, std::optional<std::string> regularizer) {
    const PredictionSet preds = ensemble.predict(data.features, &data.labels);
    DumpMeta meta;
    meta.num_members = preds.num_members();
    meta.num_points = preds.num_points();
    meta.num_classes = preds.num_classes();
    meta.seed = ensemble.seed;
    meta.tag = tag;
    meta.gamma = gamma;
    meta.regularizer = std::move(regularizer);
    meta.labels = data.labels;
    write_prediction_dump(preds, meta, csv_path);
}

}  // namespace edl
