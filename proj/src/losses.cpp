#include "edl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edl {

LossKind LossKind::cross_entropy(double label_smoothing) {
    LossKind k{Type::CrossEntropy, label_smoothing};
    k.validate();
    return k;
}

void LossKind::validate() const {
    if (type == Type::CrossEntropy) {
        if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
            throw std::invalid_argument("LossKind: label_smoothing must lie in [0, 1)");
    } else if (label_smoothing != 0.0) {
        throw std::invalid_argument("LossKind: label_smoothing only applies to cross entropy");
    }
}

std::string LossKind::name() const {
    switch (type) {
        case Type::CrossEntropy: return "cross_entropy";
        case Type::SquaredError: return "squared_error";
        case Type::Brier: return "brier";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& name, double label_smoothing) {
    if (name == "cross_entropy" || name == "ce") return LossKind::cross_entropy(label_smoothing);
    if (name == "squared_error" || name == "mse") return LossKind::squared_error();
    if (name == "brier") return LossKind::brier();
    throw std::invalid_argument("unknown loss kind: " + name);
}

namespace {

void check_label(std::span<const double> pred, int label) {
    if (label < 0 || label >= static_cast<int>(pred.size()))
        throw std::invalid_argument("point_loss: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(pred.size()) + " classes");
}

}  // namespace

double point_loss(const LossKind& kind, std::span<const double> pred, int label) {
    check_label(pred, label);
    const int classes = static_cast<int>(pred.size());
    if (kind.type == LossKind::Type::CrossEntropy) {
        const double ls = kind.label_smoothing;
        const double off_target = ls / classes;
        double loss = 0.0;
        for (int c = 0; c < classes; ++c) {
            const double target = off_target + (c == label ? 1.0 - ls : 0.0);
            if (target == 0.0) continue;
            if (!(pred[c] > 0.0))
                throw std::invalid_argument("point_loss: zero probability at target class " +
                                            std::to_string(c));
            loss -= target * std::log(pred[c]);
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

void point_loss_grad(const LossKind& kind, std::span<const double> pred, int label,
                     std::span<double> grad) {
    check_label(pred, label);
    const int classes = static_cast<int>(pred.size());
    if (kind.type == LossKind::Type::CrossEntropy) {
        const double ls = kind.label_smoothing;
        const double off_target = ls / classes;
        for (int c = 0; c < classes; ++c) {
            const double target = off_target + (c == label ? 1.0 - ls : 0.0);
            if (target == 0.0) {
                grad[c] = 0.0;
                continue;
            }
            if (!(pred[c] > 0.0))
                throw std::invalid_argument("point_loss_grad: zero probability at target class " +
                                            std::to_string(c));
            grad[c] = -target / pred[c];
        }
        return;
    }
    for (int c = 0; c < classes; ++c)
        grad[c] = 2.0 * (pred[c] - (c == label ? 1.0 : 0.0));
}

DecompositionReport decompose(const LossKind& kind, const PredictionSet& preds) {
    const auto& labels = preds.labels();
    const int m_count = preds.num_members();
    const int n_count = preds.num_points();
    const Matrix ens = ensemble_average(preds);

    DecompositionReport report;
    report.per_point.resize(n_count);
    std::vector<double> avg_vals(n_count), ens_vals(n_count), gap_vals(n_count);
    std::vector<double> member_losses(m_count);
    for (int n = 0; n < n_count; ++n) {
        try {
            for (int m = 0; m < m_count; ++m)
                member_losses[m] = point_loss(kind, preds.row(m, n), labels[n]);
            const double avg = pairwise_mean(member_losses);
            const double ens_loss = point_loss(kind, ens.row(n), labels[n]);
            report.per_point[n] = {avg, ens_loss, avg - ens_loss};
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("decompose: point " + std::to_string(n) + ": " + e.what());
        }
        avg_vals[n] = report.per_point[n].avg_loss;
        ens_vals[n] = report.per_point[n].ens_loss;
        gap_vals[n] = report.per_point[n].gap;
    }
    report.avg_member_risk = pairwise_mean(avg_vals);
    report.ensemble_risk = pairwise_mean(ens_vals);
    report.jensen_gap = pairwise_mean(gap_vals);
    return report;
}

std::vector<double> ce_gap_closed_form(const PredictionSet& preds) {
    const auto& labels = preds.labels();
    const int m_count = preds.num_members();
    const int n_count = preds.num_points();
    const double log_inv_m = std::log(1.0 / m_count);
    std::vector<double> gaps(n_count);
    for (int n = 0; n < n_count; ++n) {
        double total_correct = 0.0;
        for (int m = 0; m < m_count; ++m) total_correct += preds.at(m, n, labels[n]);
        double gap = 0.0;
        for (int m = 0; m < m_count; ++m) {
            const double p = preds.at(m, n, labels[n]);
            if (!(p > 0.0))
                throw std::invalid_argument("ce_gap_closed_form: zero correct-class probability "
                                            "at point " + std::to_string(n) + " member " +
                                            std::to_string(m));
            gap += (log_inv_m - std::log(p / total_correct)) / m_count;
        }
        gaps[n] = gap;
    }
    return gaps;
}

std::vector<double> mse_gap_closed_form(const PredictionSet& preds) {
    const int m_count = preds.num_members();
    if (m_count < 2)
        throw std::invalid_argument("mse_gap_closed_form: sample variance undefined for M = 1");
    const int n_count = preds.num_points();
    const int c_count = preds.num_classes();
    const double scale = static_cast<double>(m_count - 1) / m_count;
    std::vector<double> gaps(n_count, 0.0);
    for (int n = 0; n < n_count; ++n) {
        double gap = 0.0;
        for (int c = 0; c < c_count; ++c) {
            double mean = 0.0;
            for (int m = 0; m < m_count; ++m) mean += preds.at(m, n, c);
            mean /= m_count;
            double var = 0.0;
            for (int m = 0; m < m_count; ++m) {
                const double d = preds.at(m, n, c) - mean;
                var += d * d;
            }
            var /= (m_count - 1);
            gap += scale * var;
        }
        gaps[n] = gap;
    }
    return gaps;
}

void EceConfig::validate() const {
    if (num_bins < 1) throw std::invalid_argument("EceConfig: num_bins must be >= 1");
}

namespace {

int argmax_lowest(std::span<const double> row) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(row.size()); ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

MetricsReport metrics_impl(const Matrix& probs, std::span<const int> labels, const EceConfig& cfg) {
    cfg.validate();
    const int n_count = static_cast<int>(probs.rows());
    const LossKind ce = LossKind::cross_entropy();
    const LossKind se = LossKind::squared_error();
    std::vector<double> nll_vals(n_count), brier_vals(n_count), correct(n_count);
    std::vector<double> bin_conf(cfg.num_bins, 0.0), bin_acc(cfg.num_bins, 0.0);
    std::vector<int> bin_count(cfg.num_bins, 0);
    for (int n = 0; n < n_count; ++n) {
        const auto row = probs.row(n);
        const int pred = argmax_lowest(row);
        const double conf = row[pred];
        const bool hit = pred == labels[n];
        correct[n] = hit ? 1.0 : 0.0;
        try {
            nll_vals[n] = point_loss(ce, row, labels[n]);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("metrics: point " + std::to_string(n) + ": " + e.what());
        }
        brier_vals[n] = point_loss(se, row, labels[n]);
        int bin = static_cast<int>(conf * cfg.num_bins);
        bin = std::clamp(bin, 0, cfg.num_bins - 1);  // conf == 1 lands in the last bin
        bin_conf[bin] += conf;
        bin_acc[bin] += correct[n];
        ++bin_count[bin];
    }
    MetricsReport report;
    report.accuracy = pairwise_mean(correct);
    report.nll = pairwise_mean(nll_vals);
    report.brier = pairwise_mean(brier_vals);
    double ece = 0.0;
    for (int b = 0; b < cfg.num_bins; ++b) {
        if (bin_count[b] == 0) continue;
        const double inv = 1.0 / bin_count[b];
        ece += (static_cast<double>(bin_count[b]) / n_count) *
               std::abs(bin_acc[b] * inv - bin_conf[b] * inv);
    }
    report.ece = ece;
    return report;
}

}  // namespace

MetricsReport metrics(const PredictionSet& preds, const EceConfig& cfg) {
    return metrics_impl(ensemble_average(preds), preds.labels(), cfg);
}

MetricsReport metrics_single(const Matrix& probs, std::span<const int> labels,
                             const EceConfig& cfg) {
    if (probs.rows() != labels.size())
        throw std::invalid_argument("metrics_single: label count mismatch");
    return metrics_impl(probs, labels, cfg);
}

AuxiliaryDiversity auxiliary_diversity(const PredictionSet& preds) {
    const int m_count = preds.num_members();
    if (m_count < 2)
        throw std::invalid_argument("auxiliary_diversity: need at least 2 members");
    const int n_count = preds.num_points();
    const int c_count = preds.num_classes();
    const std::size_t flat = static_cast<std::size_t>(n_count) * c_count;

    // Flattened member vectors and their moments for Pearson correlation.
    std::vector<double> means(m_count), sds(m_count);
    bool any_constant = false;
    for (int m = 0; m < m_count; ++m) {
        std::span<const double> v{preds.data().data() + static_cast<std::size_t>(m) * flat, flat};
        means[m] = pairwise_mean(v);
        double ss = 0.0;
        for (double x : v) {
            const double d = x - means[m];
            ss += d * d;
        }
        sds[m] = std::sqrt(ss);
        if (sds[m] == 0.0) any_constant = true;
    }

    AuxiliaryDiversity out;
    double corr_sum = 0.0;
    int pair_count = 0;
    const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{1e-10});
    double kl_sum = 0.0;
    int kl_terms = 0;
    double cos_sum = 0.0;
    int cos_terms = 0;
    for (int a = 0; a < m_count; ++a) {
        for (int b = a + 1; b < m_count; ++b) {
            ++pair_count;
            if (!any_constant) {
                std::span<const double> va{preds.data().data() + static_cast<std::size_t>(a) * flat,
                                           flat};
                std::span<const double> vb{preds.data().data() + static_cast<std::size_t>(b) * flat,
                                           flat};
                double cov = 0.0;
                for (std::size_t i = 0; i < flat; ++i)
                    cov += (va[i] - means[a]) * (vb[i] - means[b]);
                corr_sum += cov / (sds[a] * sds[b]);
            }
            for (int n = 0; n < n_count; ++n) {
                const auto pa = preds.row(a, n);
                const auto pb = preds.row(b, n);
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int c = 0; c < c_count; ++c) {
                    dot += pa[c] * pb[c];
                    na += pa[c] * pa[c];
                    nb += pb[c] * pb[c];
                }
                cos_sum += dot / std::sqrt(na * nb);
                ++cos_terms;
            }
        }
    }
    for (int a = 0; a < m_count; ++a) {
        for (int b = 0; b < m_count; ++b) {
            if (a == b) continue;
            for (int n = 0; n < n_count; ++n) {
                const auto pa = padded.row(a, n);
                const auto pb = padded.row(b, n);
                double kl = 0.0;
                for (int c = 0; c < c_count; ++c)
                    if (pa[c] > 0.0) kl += pa[c] * std::log(pa[c] / pb[c]);
                kl_sum += kl;
                ++kl_terms;
            }
        }
    }
    if (!any_constant) out.pairwise_correlation = corr_sum / pair_count;
    out.avg_pairwise_kl = kl_sum / kl_terms;
    out.avg_cosine_similarity = cos_sum / cos_terms;
    return out;
}

}  // namespace edl
