#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "edl/losses.hpp"
#include "edl/regularizers.hpp"
#include "edl/rng.hpp"
#include "edl/simplex.hpp"

// Reference oracles written directly from the documented formulas. They stay
// independent of the library implementation paths they are used to check.
namespace edltest {

inline double ref_point_loss(const edl::LossKind& kind, std::span<const double> pred, int label) {
    const int classes = static_cast<int>(pred.size());
    if (kind.type == edl::LossKind::Type::CrossEntropy) {
        double loss = 0.0;
        for (int c = 0; c < classes; ++c) {
            const double target =
                kind.label_smoothing / classes + (c == label ? 1.0 - kind.label_smoothing : 0.0);
            if (target > 0.0) loss -= target * std::log(pred[c]);
        }
        return loss;
    }
    double loss = 0.0;
    for (int c = 0; c < classes; ++c) {
        const double d = pred[c] - (c == label ? 1.0 : 0.0);
        loss += d * d;
    }
    return loss;
}

inline std::vector<double> ref_pad(std::span<const double> row, double eps) {
    std::vector<double> out(row.begin(), row.end());
    const double denom = 1.0 + row.size() * eps;
    for (double& p : out) p = (p + eps) / denom;
    return out;
}

inline double ref_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

/// Diversity measures restated from their definitions. For Variance the
/// denominator can be frozen to a fixed value (pass a positive frozen_denom)
/// to mirror the documented constant-during-differentiation treatment.
inline double ref_diversity(edl::RegularizerKind kind, std::span<const double> probs, int m_count,
                            int c_count, int label, const edl::LossKind& loss,
                            double frozen_denom = -1.0) {
    const auto member = [&](int m) {
        return probs.subspan(static_cast<std::size_t>(m) * c_count, c_count);
    };
    switch (kind) {
        case edl::RegularizerKind::Variance: {
            double mean = 0.0, max_p = 0.0;
            for (int m = 0; m < m_count; ++m) {
                mean += member(m)[label];
                max_p = std::max(max_p, member(m)[label]);
            }
            mean /= m_count;
            double ss = 0.0;
            for (int m = 0; m < m_count; ++m) {
                const double d = member(m)[label] - mean;
                ss += d * d;
            }
            const double denom = frozen_denom > 0.0 ? frozen_denom : max_p;
            return ss / (2.0 * (m_count - 1) * denom);
        }
        case edl::RegularizerKind::JsdOneVsAll: {
            std::vector<double> padded;
            for (int m = 0; m < m_count; ++m) {
                const auto row = ref_pad(member(m), edl::kJsPadEpsilon);
                padded.insert(padded.end(), row.begin(), row.end());
            }
            const auto pmember = [&](int m) {
                return std::span<const double>(padded).subspan(
                    static_cast<std::size_t>(m) * c_count, c_count);
            };
            double total = 0.0;
            for (int i = 0; i < m_count; ++i) {
                std::vector<double> rest(c_count, 0.0), mid(c_count);
                for (int j = 0; j < m_count; ++j) {
                    if (j == i) continue;
                    for (int c = 0; c < c_count; ++c) rest[c] += pmember(j)[c] / (m_count - 1);
                }
                for (int c = 0; c < c_count; ++c) mid[c] = 0.5 * (pmember(i)[c] + rest[c]);
                total += ref_entropy(mid) - 0.5 * ref_entropy(pmember(i)) - 0.5 * ref_entropy(rest);
            }
            return total / m_count;
        }
        case edl::RegularizerKind::JsdUniform: {
            std::vector<double> padded;
            for (int m = 0; m < m_count; ++m) {
                const auto row = ref_pad(member(m), edl::kJsPadEpsilon);
                padded.insert(padded.end(), row.begin(), row.end());
            }
            std::vector<double> mean(c_count, 0.0);
            double h_members = 0.0;
            for (int m = 0; m < m_count; ++m) {
                const std::span<const double> row{padded.data() + static_cast<std::size_t>(m) * c_count,
                                                  static_cast<std::size_t>(c_count)};
                h_members += ref_entropy(row);
                for (int c = 0; c < c_count; ++c) mean[c] += row[c] / m_count;
            }
            return ref_entropy(mean) - h_members / m_count;
        }
        case edl::RegularizerKind::JensenGap: {
            std::vector<double> mean(c_count, 0.0);
            double avg = 0.0;
            for (int m = 0; m < m_count; ++m) {
                avg += ref_point_loss(loss, member(m), label) / m_count;
                for (int c = 0; c < c_count; ++c) mean[c] += member(m)[c] / m_count;
            }
            return avg - ref_point_loss(loss, mean, label);
        }
    }
    return 0.0;
}

inline std::vector<double> ref_softmax(std::span<const double> logits) {
    double max_z = logits[0];
    for (double z : logits) max_z = std::max(max_z, z);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp(logits[c] - max_z);
        sum += out[c];
    }
    for (double& p : out) p /= sum;
    return out;
}

/// Objective restated on logits: average member loss + gamma * diversity,
/// with the Variance denominator optionally frozen.
inline double ref_objective_from_logits(const edl::RegularizedObjectiveSpec& spec,
                                        std::span<const double> logits, int m_count, int c_count,
                                        int label, double frozen_denom = -1.0) {
    std::vector<double> probs;
    for (int m = 0; m < m_count; ++m) {
        const auto p =
            ref_softmax(logits.subspan(static_cast<std::size_t>(m) * c_count, c_count));
        probs.insert(probs.end(), p.begin(), p.end());
    }
    double avg = 0.0;
    for (int m = 0; m < m_count; ++m)
        avg += ref_point_loss(spec.loss,
                              std::span<const double>(probs).subspan(
                                  static_cast<std::size_t>(m) * c_count, c_count),
                              label) /
               m_count;
    const double div = ref_diversity(spec.regularizer, probs, m_count, c_count, label, spec.loss,
                                     frozen_denom);
    return avg + spec.gamma * div;
}

/// Central finite differences.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step = 1e-5) {
    std::vector<double> grad(x.size());
    std::vector<double> work(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = work[i];
        work[i] = saved + step;
        const double hi = f(work);
        work[i] = saved - step;
        const double lo = f(work);
        work[i] = saved;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

inline double rel_error(double got, double expected) {
    return std::abs(got - expected) / std::max(1.0, std::abs(expected));
}

/// Random member predictions via softmax of Gaussian logits.
inline edl::PredictionSet random_prediction_set(edl::SeededRng& rng, int m_count, int n_count,
                                                int c_count, bool with_labels = true,
                                                double logit_scale = 2.0) {
    edl::PredictionSet preds(m_count, n_count, c_count);
    std::vector<double> logits(c_count);
    for (int m = 0; m < m_count; ++m)
        for (int n = 0; n < n_count; ++n) {
            for (int c = 0; c < c_count; ++c) logits[c] = logit_scale * rng.normal();
            edl::softmax_into(logits, preds.row(m, n));
        }
    if (with_labels) {
        std::vector<int> labels(n_count);
        for (int n = 0; n < n_count; ++n) labels[n] = static_cast<int>(rng.below(c_count));
        preds.set_labels(std::move(labels));
    }
    return preds;
}

}  // namespace edltest
