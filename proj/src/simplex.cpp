#include "edl/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edl {

void validate_simplex_row(std::span<const double> row, const std::string& context) {
    if (row.size() < 2)
        throw std::invalid_argument(context + ": need at least 2 classes, got " +
                                    std::to_string(row.size()));
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double p = row[c];
        if (!(p >= 0.0))
            throw std::invalid_argument(context + ": negative or non-finite probability at class " +
                                        std::to_string(c));
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw std::invalid_argument(context + ": probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-9");
}

ProbVector ProbVector::checked(std::vector<double> values) {
    ProbVector v{std::move(values)};
    v.validate();
    return v;
}

void ProbVector::validate() const { validate_simplex_row(probs, "ProbVector"); }

void PaddingPolicy::validate(int num_classes) const {
    if (!(epsilon >= 0.0))
        throw std::invalid_argument("PaddingPolicy: epsilon must be non-negative");
    if (num_classes >= 2 && epsilon >= 1.0 / num_classes)
        throw std::invalid_argument("PaddingPolicy: epsilon must be below 1/C");
}

PredictionSet::PredictionSet(int num_members, int num_points, int num_classes)
    : num_members_(num_members),
      num_points_(num_points),
      num_classes_(num_classes) {
    if (num_members < 1 || num_points < 1 || num_classes < 2)
        throw std::invalid_argument("PredictionSet: require M >= 1, N >= 1, C >= 2");
    data_.assign(static_cast<std::size_t>(num_members) * num_points * num_classes, 0.0);
}

const std::vector<int>& PredictionSet::labels() const {
    if (!labels_) throw std::invalid_argument("PredictionSet: labels required but not set");
    return *labels_;
}

void PredictionSet::set_labels(std::vector<int> labels) {
    if (static_cast<int>(labels.size()) != num_points_)
        throw std::invalid_argument("PredictionSet: label count must equal N");
    for (std::size_t n = 0; n < labels.size(); ++n)
        if (labels[n] < 0 || labels[n] >= num_classes_)
            throw std::invalid_argument("PredictionSet: label out of range at point " +
                                        std::to_string(n));
    labels_ = std::move(labels);
}

void PredictionSet::validate() const {
    for (int m = 0; m < num_members_; ++m)
        for (int n = 0; n < num_points_; ++n)
            validate_simplex_row(row(m, n), "PredictionSet member " + std::to_string(m) +
                                                " point " + std::to_string(n));
    if (labels_) {
        for (int n = 0; n < num_points_; ++n)
            if ((*labels_)[n] < 0 || (*labels_)[n] >= num_classes_)
                throw std::invalid_argument("PredictionSet: label out of range at point " +
                                            std::to_string(n));
    }
}

void PredictionSet::point_block(int n, std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(num_members_) * num_classes_);
    for (int m = 0; m < num_members_; ++m) {
        const auto src = row(m, n);
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::size_t>(m) * num_classes_);
    }
}

Matrix ensemble_average(const PredictionSet& preds) {
    const int m_count = preds.num_members();
    const int n_count = preds.num_points();
    const int c_count = preds.num_classes();
    Matrix out(n_count, c_count);
    const double inv_m = 1.0 / m_count;
    for (int m = 0; m < m_count; ++m)
        for (int n = 0; n < n_count; ++n) {
            const auto src = preds.row(m, n);
            double* dst = out.row(n).data();
            for (int c = 0; c < c_count; ++c) dst[c] += src[c];
        }
    for (auto& v : out.data()) v *= inv_m;
    return out;
}

void pad_row(std::span<double> row, double epsilon) {
    if (epsilon == 0.0) return;
    const double denom = 1.0 + static_cast<double>(row.size()) * epsilon;
    for (double& p : row) p = (p + epsilon) / denom;
}

PredictionSet pad_and_renormalize(const PredictionSet& preds, const PaddingPolicy& policy) {
    policy.validate(preds.num_classes());
    PredictionSet out = preds;
    if (policy.epsilon == 0.0) return out;
    for (int m = 0; m < out.num_members(); ++m)
        for (int n = 0; n < out.num_points(); ++n) pad_row(out.row(m, n), policy.epsilon);
    return out;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
    if (logits.size() != out.size()) throw std::invalid_argument("softmax: output size mismatch");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp(logits[c] - max_logit);
        sum += out[c];
    }
    for (double& p : out) p /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    softmax_into(logits, out);
    return out;
}

void TabularDataset::validate() const {
    if (features.rows() != labels.size())
        throw std::invalid_argument("TabularDataset: feature rows must equal label count");
    if (num_classes < 2) throw std::invalid_argument("TabularDataset: need at least 2 classes");
    for (const double v : features.data())
        if (!std::isfinite(v)) throw std::invalid_argument("TabularDataset: non-finite feature value");
    for (std::size_t n = 0; n < labels.size(); ++n)
        if (labels[n] < 0 || labels[n] >= num_classes)
            throw std::invalid_argument("TabularDataset: label out of range at row " +
                                        std::to_string(n));
}

TabularDataset TabularDataset::subset(std::span<const std::size_t> indices) const {
    TabularDataset out;
    out.num_classes = num_classes;
    out.features = Matrix(indices.size(), features.cols());
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = features.row(indices[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels[i] = labels[indices[i]];
    }
    return out;
}

}  // namespace edl
