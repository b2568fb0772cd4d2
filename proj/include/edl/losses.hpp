#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edl/simplex.hpp"

namespace edl {

/// Pointwise classification loss. Cross entropy and entropy terms use the
/// natural logarithm throughout. Brier score is multiclass squared error
/// against the one-hot target, so it shares the SquaredError machinery.
struct LossKind {
    enum class Type { CrossEntropy, SquaredError, Brier };

    Type type = Type::CrossEntropy;
    double label_smoothing = 0.0;  // CrossEntropy only, in [0, 1)

    static LossKind cross_entropy(double label_smoothing = 0.0);
    static LossKind squared_error() { return {Type::SquaredError, 0.0}; }
    static LossKind brier() { return {Type::Brier, 0.0}; }

    bool is_squared() const { return type != Type::CrossEntropy; }
    void validate() const;
    std::string name() const;
};

LossKind parse_loss_kind(const std::string& name, double label_smoothing = 0.0);

/// Loss of a single prediction against an integer label.
double point_loss(const LossKind& kind, std::span<const double> pred, int label);

/// Derivative of point_loss with respect to the prediction entries.
void point_loss_grad(const LossKind& kind, std::span<const double> pred, int label,
                     std::span<double> grad);

struct PointDecomposition {
    double avg_loss = 0.0;  // mean member loss at this point
    double ens_loss = 0.0;  // loss of the averaged prediction
    double gap = 0.0;       // avg_loss - ens_loss
};

/// Ensemble risk split into average member risk minus the Jensen gap.
/// Aggregates are pairwise means of per-point values, so the identity
/// ensemble_risk = avg_member_risk - jensen_gap holds to roundoff.
struct DecompositionReport {
    double ensemble_risk = 0.0;
    double avg_member_risk = 0.0;
    double jensen_gap = 0.0;
    std::vector<PointDecomposition> per_point;
};

DecompositionReport decompose(const LossKind& kind, const PredictionSet& preds);

/// Per-point cross-entropy Jensen gap from correct-class probabilities only:
/// sum_i (1/M) [ln(1/M) - ln(f_i^y / sum_j f_j^y)].
std::vector<double> ce_gap_closed_form(const PredictionSet& preds);

/// Per-point squared-error Jensen gap: (M-1)/M times the unbiased sample
/// variance of member probabilities, summed over classes. Requires M >= 2.
std::vector<double> mse_gap_closed_form(const PredictionSet& preds);

struct EceConfig {
    int num_bins = 15;  // equal-width bins on max-probability confidence
    void validate() const;
};

struct MetricsReport {
    double accuracy = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece = 0.0;
};

/// Accuracy / NLL / Brier / ECE of the ensemble-average prediction.
/// Argmax ties break toward the lowest class index.
MetricsReport metrics(const PredictionSet& preds, const EceConfig& cfg = {});

/// Metrics of a single N x C prediction matrix (one model).
MetricsReport metrics_single(const Matrix& probs, std::span<const int> labels,
                             const EceConfig& cfg = {});

struct AuxiliaryDiversity {
    /// Mean Pearson correlation between flattened member predictions over
    /// unordered pairs; absent when any member is constant.
    std::optional<double> pairwise_correlation;
    double avg_pairwise_kl = 0.0;        // ordered pairs, eps-padded inputs
    double avg_cosine_similarity = 0.0;  // per-point, unordered pairs
};

AuxiliaryDiversity auxiliary_diversity(const PredictionSet& preds);

}  // namespace edl
