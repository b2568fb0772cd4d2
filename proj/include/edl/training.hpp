#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edl/mlp.hpp"
#include "edl/regularizers.hpp"
#include "edl/rff.hpp"
#include "edl/simplex.hpp"

namespace edl {

struct OptimizerConfig {
    enum class Variant { Sgd, AdamW };
    enum class Schedule { Constant, Step, Cosine };

    Variant variant = Variant::AdamW;
    double learning_rate = 5e-4;
    double weight_decay = 2e-5;
    double momentum = 0.9;   // SGD
    double beta1 = 0.9;      // AdamW
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    Schedule schedule = Schedule::Constant;
    std::vector<int> milestones;  // Step
    double step_factor = 0.1;
    int warmup_epochs = 0;  // Cosine

    void validate() const;
    double lr_at(int epoch, int total_epochs) const;
};

struct EarlyStoppingConfig {
    bool enabled = true;
    int patience = 10;
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
    void validate() const;
};

struct TrainRunConfig {
    RegularizedObjectiveSpec objective;
    int num_members = 4;
    int epochs = 100;
    int batch_size = 128;
    std::uint64_t seed = 0;
    EarlyStoppingConfig early_stopping;
    SplitFractions splits;
    OptimizerConfig optimizer;
    /// Divergence guard; forced on when gamma < -0.9.
    bool clip_gradients = false;
    double clip_norm = 10.0;
    /// Explicit per-member init seeds; default is seed-derived child streams.
    std::vector<std::uint64_t> member_seeds;

    void validate() const;
};

struct DataSplits {
    TabularDataset train;
    TabularDataset val;
    TabularDataset test;
};

/// Seeded shuffle split into train/val/test.
DataSplits split_dataset(const TabularDataset& data, const SplitFractions& fractions,
                         SeededRng& rng);

/// M members sharing one architecture, optionally behind a frozen random
/// Fourier feature map.
struct EnsembleModel {
    std::optional<RffFeatureMap> feature_map;
    MlpArchitecture arch;  // over transformed features when feature_map is set
    std::vector<MlpParameters> members;
    std::uint64_t seed = 0;

    Matrix transform(const Matrix& features) const;
    Matrix member_probs(int member, const Matrix& features) const;
    PredictionSet predict(const Matrix& features, const std::vector<int>* labels = nullptr) const;
};

struct EpochStats {
    double objective = 0.0;
    double avg_loss = 0.0;
    double diversity = 0.0;
    double val_metric = 0.0;
};

struct TrainedEnsemble {
    EnsembleModel model;
    std::vector<EpochStats> history;  // one entry per epoch actually run
    PredictionSet train_preds;
    PredictionSet val_preds;
    PredictionSet test_preds;
    int best_epoch = -1;
    double best_val_metric = 0.0;
    bool diverged = false;
};

/// Jointly trains all M members on the gamma-regularized objective. Members
/// share one batch stream (the coupling term is defined per datapoint), and
/// the checkpoint with the best validation average member loss is retained.
/// Deterministic given the config.
TrainedEnsemble train_joint(const MlpArchitecture& arch,
                            const std::optional<RffFeatureMap>& feature_map,
                            const DataSplits& splits, const TrainRunConfig& config);

/// Standard ensemble training: the gamma = 0 objective, which decouples into
/// M per-member optimizations differing only in seed-derived initialization.
TrainedEnsemble train_independent(const MlpArchitecture& arch,
                                  const std::optional<RffFeatureMap>& feature_map,
                                  const DataSplits& splits, const TrainRunConfig& config);

/// Metadata attached to prediction dumps (sidecar JSON next to the CSV).
struct DumpMeta {
    int num_members = 0;
    int num_points = 0;
    int num_classes = 0;
    std::uint64_t seed = 0;
    std::string tag;
    std::optional<double> gamma;
    std::optional<std::string> regularizer;
    std::optional<std::vector<int>> labels;
};

/// Computes ensemble predictions on the dataset and writes the dump CSV
/// (member,point,class,prob) plus its sidecar. Reload reproduces every
/// derived metric exactly.
void dump_predictions(const EnsembleModel& ensemble, const TabularDataset& data,
                      const std::filesystem::path& csv_path, const std::string& tag,
                      std::optional<double> gamma = std::nullopt,
                      std::optional<std::string> regularizer = std::nullopt);

}  // namespace edl
