#pragma once

#include <span>
#include <string>
#include <vector>

#include "edl/losses.hpp"

namespace edl {

/// Member predictions (or logits) for a single datapoint, M x C row-major.
struct PointView {
    std::span<const double> values;
    int num_members = 0;
    int num_classes = 0;

    PointView(std::span<const double> v, int m, int c) : values(v), num_members(m), num_classes(c) {
        if (static_cast<int>(v.size()) != m * c)
            throw std::invalid_argument("PointView: size != M * C");
    }

    std::span<const double> member(int m) const {
        return values.subspan(static_cast<std::size_t>(m) * num_classes, num_classes);
    }
};

/// Diversity measures over member predictions at one datapoint.
///   Variance    — scaled variance of correct-class probabilities
///   JsdOneVsAll — mean Jensen-Shannon divergence of each member against
///                 the mean of the others
///   JsdUniform  — entropy of the mean minus mean entropy (multi-distribution
///                 JS divergence with uniform weights)
///   JensenGap   — average member loss minus ensemble loss
/// The JS-based measures are evaluated on eps-padded inputs (1e-10) so
/// one-hot members stay finite; Variance and JensenGap use raw inputs.
enum class RegularizerKind { Variance, JsdOneVsAll, JsdUniform, JensenGap };

std::string regularizer_name(RegularizerKind kind);
RegularizerKind parse_regularizer(const std::string& name);

inline constexpr double kJsPadEpsilon = 1e-10;

/// gamma < 0 rewards diversity, gamma > 0 penalizes it.
struct RegularizedObjectiveSpec {
    LossKind loss;
    RegularizerKind regularizer = RegularizerKind::JensenGap;
    double gamma = 0.0;

    void validate() const;
    /// Non-fatal advisories (e.g. the degenerate gamma <= -1 JensenGap regime).
    std::vector<std::string> warnings() const;
};

/// Diversity at one point. `loss` is consulted only by JensenGap; the label
/// only by Variance and JensenGap.
double diversity_value(RegularizerKind kind, const PointView& preds, int label,
                       const LossKind& loss = LossKind::cross_entropy());

struct ObjectiveParts {
    double objective = 0.0;
    double avg_loss = 0.0;
    double diversity = 0.0;
};

/// Average member loss plus gamma times the diversity measure.
double objective_value(const RegularizedObjectiveSpec& spec, const PointView& preds, int label);
ObjectiveParts objective_parts(const RegularizedObjectiveSpec& spec, const PointView& preds,
                               int label);

/// Exact gradient of objective_value composed with a per-member softmax,
/// with respect to the M x C member logits. Also returns the value parts.
///
/// The Variance denominator max_i f_i^y is held constant during
/// differentiation (no gradient flows through the max); finite-difference
/// checks must freeze it the same way.
ObjectiveParts objective_gradient(const RegularizedObjectiveSpec& spec, const PointView& logits,
                                  int label, std::span<double> grad_out);

}  // namespace edl
