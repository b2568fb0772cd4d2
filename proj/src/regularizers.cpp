#include "edl/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edl {

std::string regularizer_name(RegularizerKind kind) {
    switch (kind) {
        case RegularizerKind::Variance: return "variance";
        case RegularizerKind::JsdOneVsAll: return "jsd_1va";
        case RegularizerKind::JsdUniform: return "jsd_uniform";
        case RegularizerKind::JensenGap: return "jensen_gap";
    }
    return "?";
}

RegularizerKind parse_regularizer(const std::string& name) {
    if (name == "variance") return RegularizerKind::Variance;
    if (name == "jsd_1va") return RegularizerKind::JsdOneVsAll;
    if (name == "jsd_uniform") return RegularizerKind::JsdUniform;
    if (name == "jensen_gap") return RegularizerKind::JensenGap;
    throw std::invalid_argument("unknown regularizer: " + name +
                                " (expected variance | jsd_1va | jsd_uniform | jensen_gap)");
}

void RegularizedObjectiveSpec::validate() const {
    loss.validate();
    if (!std::isfinite(gamma))
        throw std::invalid_argument("RegularizedObjectiveSpec: gamma must be finite");
}

std::vector<std::string> RegularizedObjectiveSpec::warnings() const {
    std::vector<std::string> out;
    if (regularizer == RegularizerKind::JensenGap && gamma <= -1.0)
        out.push_back("jensen_gap with gamma <= -1 rewards unbounded diversity; "
                      "training may find degenerate solutions");
    return out;
}

namespace {

struct ScratchBuffers {
    std::vector<double> padded;   // M x C
    std::vector<double> mean;     // C
    std::vector<double> work_a;   // C
    std::vector<double> work_b;   // C
};

void member_mean(const PointView& v, std::vector<double>& out) {
    out.assign(v.num_classes, 0.0);
    for (int m = 0; m < v.num_members; ++m) {
        const auto row = v.member(m);
        for (int c = 0; c < v.num_classes; ++c) out[c] += row[c];
    }
    const double inv = 1.0 / v.num_members;
    for (double& x : out) x *= inv;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

void pad_copy(const PointView& v, std::vector<double>& out) {
    out.assign(v.values.begin(), v.values.end());
    const double denom = 1.0 + v.num_classes * kJsPadEpsilon;
    for (double& x : out) x = (x + kJsPadEpsilon) / denom;
}

double variance_diversity(const PointView& v, int label, double* max_out = nullptr) {
    if (v.num_members < 2)
        throw std::invalid_argument("diversity_value: variance requires at least 2 members");
    if (label < 0 || label >= v.num_classes)
        throw std::invalid_argument("diversity_value: label out of range");
    double mean = 0.0, max_p = 0.0;
    for (int m = 0; m < v.num_members; ++m) {
        const double p = v.member(m)[label];
        mean += p;
        max_p = std::max(max_p, p);
    }
    mean /= v.num_members;
    if (!(max_p > 0.0))
        throw std::invalid_argument("diversity_value: variance undefined when every member "
                                    "assigns zero probability to the correct class");
    double ss = 0.0;
    for (int m = 0; m < v.num_members; ++m) {
        const double d = v.member(m)[label] - mean;
        ss += d * d;
    }
    if (max_out != nullptr) *max_out = max_p;
    return ss / (2.0 * (v.num_members - 1) * max_p);
}

double jsd_one_vs_all(const PointView& raw, ScratchBuffers& s) {
    const int m_count = raw.num_members;
    const int c_count = raw.num_classes;
    if (m_count < 2)
        throw std::invalid_argument("diversity_value: jsd_1va requires at least 2 members");
    pad_copy(raw, s.padded);
    const PointView v{std::span<const double>(s.padded), m_count, c_count};
    member_mean(v, s.mean);  // mean of padded members
    double total = 0.0;
    for (int i = 0; i < m_count; ++i) {
        const auto p = v.member(i);
        // rest = mean of the other M-1 members; mid = (p + rest) / 2
        s.work_a.resize(c_count);
        s.work_b.resize(c_count);
        const double scale = static_cast<double>(m_count) / (m_count - 1);
        for (int c = 0; c < c_count; ++c) {
            s.work_a[c] = scale * (s.mean[c] - p[c] / m_count);
            s.work_b[c] = 0.5 * (p[c] + s.work_a[c]);
        }
        total += entropy(s.work_b) - 0.5 * entropy(p) - 0.5 * entropy(s.work_a);
    }
    return total / m_count;
}

double jsd_uniform(const PointView& raw, ScratchBuffers& s) {
    pad_copy(raw, s.padded);
    const PointView v{std::span<const double>(s.padded), raw.num_members, raw.num_classes};
    member_mean(v, s.mean);
    double mean_entropy = 0.0;
    for (int m = 0; m < v.num_members; ++m) mean_entropy += entropy(v.member(m));
    return entropy(s.mean) - mean_entropy / v.num_members;
}

double jensen_gap_diversity(const PointView& v, int label, const LossKind& loss,
                            ScratchBuffers& s) {
    member_mean(v, s.mean);
    double avg = 0.0;
    for (int m = 0; m < v.num_members; ++m) avg += point_loss(loss, v.member(m), label);
    avg /= v.num_members;
    return avg - point_loss(loss, s.mean, label);
}

/// dL/dz for one member given its softmax output p and dL/dp.
void softmax_vjp(std::span<const double> p, std::span<const double> g, std::span<double> dz) {
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += g[c] * p[c];
    for (std::size_t c = 0; c < p.size(); ++c) dz[c] = p[c] * (g[c] - dot);
}

}  // namespace

double diversity_value(RegularizerKind kind, const PointView& preds, int label,
                       const LossKind& loss) {
    ScratchBuffers s;
    switch (kind) {
        case RegularizerKind::Variance: return variance_diversity(preds, label);
        case RegularizerKind::JsdOneVsAll: return jsd_one_vs_all(preds, s);
        case RegularizerKind::JsdUniform: return jsd_uniform(preds, s);
        case RegularizerKind::JensenGap: return jensen_gap_diversity(preds, label, loss, s);
    }
    throw std::invalid_argument("diversity_value: unknown kind");
}

ObjectiveParts objective_parts(const RegularizedObjectiveSpec& spec, const PointView& preds,
                               int label) {
    spec.validate();
    ObjectiveParts parts;
    double avg = 0.0;
    for (int m = 0; m < preds.num_members; ++m)
        avg += point_loss(spec.loss, preds.member(m), label);
    parts.avg_loss = avg / preds.num_members;
    parts.diversity = diversity_value(spec.regularizer, preds, label, spec.loss);
    parts.objective = parts.avg_loss + spec.gamma * parts.diversity;
    return parts;
}

double objective_value(const RegularizedObjectiveSpec& spec, const PointView& preds, int label) {
    return objective_parts(spec, preds, label).objective;
}

ObjectiveParts objective_gradient(const RegularizedObjectiveSpec& spec, const PointView& logits,
                                  int label, std::span<double> grad_out) {
    spec.validate();
    const int m_count = logits.num_members;
    const int c_count = logits.num_classes;
    if (static_cast<int>(grad_out.size()) != m_count * c_count)
        throw std::invalid_argument("objective_gradient: grad_out size != M * C");
    for (double z : logits.values)
        if (!std::isfinite(z)) throw std::invalid_argument("objective_gradient: non-finite logit");

    // Member probabilities.
    std::vector<double> probs(static_cast<std::size_t>(m_count) * c_count);
    for (int m = 0; m < m_count; ++m)
        softmax_into(logits.member(m),
                     std::span<double>(probs.data() + static_cast<std::size_t>(m) * c_count,
                                       c_count));
    const PointView pview{std::span<const double>(probs), m_count, c_count};

    ScratchBuffers s;
    member_mean(pview, s.mean);
    std::vector<double> ens = s.mean;

    // dObjective/dp, accumulated per member in probability space.
    std::vector<double> dprob(probs.size(), 0.0);
    ObjectiveParts parts;

    {  // average member loss term
        std::vector<double> g(c_count);
        double avg = 0.0;
        for (int m = 0; m < m_count; ++m) {
            const auto p = pview.member(m);
            avg += point_loss(spec.loss, p, label);
            point_loss_grad(spec.loss, p, label, g);
            double* dst = dprob.data() + static_cast<std::size_t>(m) * c_count;
            for (int c = 0; c < c_count; ++c) dst[c] += g[c] / m_count;
        }
        parts.avg_loss = avg / m_count;
    }

    const double gamma = spec.gamma;
    switch (spec.regularizer) {
        case RegularizerKind::Variance: {
            double max_p = 0.0;
            parts.diversity = variance_diversity(pview, label, &max_p);
            if (gamma != 0.0) {
                double mean = 0.0;
                for (int m = 0; m < m_count; ++m) mean += pview.member(m)[label];
                mean /= m_count;
                const double scale = gamma / ((m_count - 1) * max_p);
                for (int m = 0; m < m_count; ++m)
                    dprob[static_cast<std::size_t>(m) * c_count + label] +=
                        scale * (pview.member(m)[label] - mean);
            }
            break;
        }
        case RegularizerKind::JsdOneVsAll: {
            parts.diversity = jsd_one_vs_all(pview, s);
            if (gamma != 0.0) {
                std::vector<double> padded;
                pad_copy(pview, padded);
                const PointView pv{std::span<const double>(padded), m_count, c_count};
                std::vector<double> pmean(c_count, 0.0);
                member_mean(pv, pmean);
                // rest_i = (M * mean - p_i) / (M - 1); mid_i = (p_i + rest_i) / 2
                std::vector<double> rest(static_cast<std::size_t>(m_count) * c_count);
                std::vector<double> mid(rest.size());
                const double rscale = static_cast<double>(m_count) / (m_count - 1);
                for (int i = 0; i < m_count; ++i) {
                    const auto p = pv.member(i);
                    for (int c = 0; c < c_count; ++c) {
                        const std::size_t idx = static_cast<std::size_t>(i) * c_count + c;
                        rest[idx] = rscale * (pmean[c] - p[c] / m_count);
                        mid[idx] = 0.5 * (p[c] + rest[idx]);
                    }
                }
                const double pad_jac = 1.0 / (1.0 + c_count * kJsPadEpsilon);
                for (int k = 0; k < m_count; ++k) {
                    double* dst = dprob.data() + static_cast<std::size_t>(k) * c_count;
                    for (int c = 0; c < c_count; ++c) {
                        const std::size_t kc = static_cast<std::size_t>(k) * c_count + c;
                        double d = 0.5 * std::log(padded[kc] / mid[kc]);
                        for (int i = 0; i < m_count; ++i) {
                            if (i == k) continue;
                            const std::size_t ic = static_cast<std::size_t>(i) * c_count + c;
                            d += 0.5 * std::log(rest[ic] / mid[ic]) / (m_count - 1);
                        }
                        dst[c] += gamma * pad_jac * d / m_count;
                    }
                }
            }
            break;
        }
        case RegularizerKind::JsdUniform: {
            parts.diversity = jsd_uniform(pview, s);
            if (gamma != 0.0) {
                std::vector<double> padded;
                pad_copy(pview, padded);
                const PointView pv{std::span<const double>(padded), m_count, c_count};
                std::vector<double> pmean(c_count, 0.0);
                member_mean(pv, pmean);
                const double pad_jac = 1.0 / (1.0 + c_count * kJsPadEpsilon);
                for (int m = 0; m < m_count; ++m) {
                    const auto p = pv.member(m);
                    double* dst = dprob.data() + static_cast<std::size_t>(m) * c_count;
                    for (int c = 0; c < c_count; ++c)
                        dst[c] += gamma * pad_jac * std::log(p[c] / pmean[c]) / m_count;
                }
            }
            break;
        }
        case RegularizerKind::JensenGap: {
            parts.diversity = jensen_gap_diversity(pview, label, spec.loss, s);
            if (gamma != 0.0) {
                std::vector<double> g_member(c_count), g_ens(c_count);
                point_loss_grad(spec.loss, ens, label, g_ens);
                for (int m = 0; m < m_count; ++m) {
                    point_loss_grad(spec.loss, pview.member(m), label, g_member);
                    double* dst = dprob.data() + static_cast<std::size_t>(m) * c_count;
                    for (int c = 0; c < c_count; ++c)
                        dst[c] += gamma * (g_member[c] - g_ens[c]) / m_count;
                }
            }
            break;
        }
    }
    parts.objective = parts.avg_loss + gamma * parts.diversity;
    if (!std::isfinite(parts.objective))
        throw std::runtime_error("objective_gradient: non-finite objective value");

    for (int m = 0; m < m_count; ++m) {
        const auto p = pview.member(m);
        std::span<const double> g{dprob.data() + static_cast<std::size_t>(m) * c_count,
                                  static_cast<std::size_t>(c_count)};
        std::span<double> dz = grad_out.subspan(static_cast<std::size_t>(m) * c_count, c_count);
        softmax_vjp(p, g, dz);
        for (int c = 0; c < c_count; ++c)
            if (!std::isfinite(dz[c]))
                throw std::runtime_error("objective_gradient: non-finite gradient at member " +
                                         std::to_string(m) + " class " + std::to_string(c));
    }
    return parts;
}

}  // namespace edl
