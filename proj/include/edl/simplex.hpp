#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edl/common.hpp"

namespace edl {

inline constexpr double kSimplexTolerance = 1e-9;

/// A point on the probability simplex: C >= 2 non-negative entries summing
/// to 1 within kSimplexTolerance.
struct ProbVector {
    std::vector<double> probs;

    static ProbVector checked(std::vector<double> values);
    void validate() const;
    int num_classes() const { return static_cast<int>(probs.size()); }
};

/// Validates one simplex row without constructing a ProbVector.
void validate_simplex_row(std::span<const double> row, const std::string& context);

/// Uniform additive padding: p -> (p + epsilon) / (1 + C * epsilon).
/// epsilon must stay below 1/C so padded rows remain valid.
struct PaddingPolicy {
    double epsilon = 1e-10;
    void validate(int num_classes) const;
};

/// Probability outputs of M ensemble members on N datapoints over C classes,
/// stored member-major (index [m][n][c]), with optional integer labels.
class PredictionSet {
  public:
    PredictionSet() = default;
    PredictionSet(int num_members, int num_points, int num_classes);

    int num_members() const { return num_members_; }
    int num_points() const { return num_points_; }
    int num_classes() const { return num_classes_; }

    double& at(int m, int n, int c) { return data_[offset(m, n, c)]; }
    double at(int m, int n, int c) const { return data_[offset(m, n, c)]; }

    std::span<double> row(int m, int n) {
        return {data_.data() + offset(m, n, 0), static_cast<std::size_t>(num_classes_)};
    }
    std::span<const double> row(int m, int n) const {
        return {data_.data() + offset(m, n, 0), static_cast<std::size_t>(num_classes_)};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool has_labels() const { return labels_.has_value(); }
    const std::vector<int>& labels() const;
    void set_labels(std::vector<int> labels);
    void clear_labels() { labels_.reset(); }

    /// Checks every stored row against the simplex invariants and the label
    /// range; throws std::invalid_argument with the offending indices.
    void validate() const;

    /// Copies the M x C block of member predictions for one datapoint.
    void point_block(int n, std::vector<double>& out) const;

  private:
    std::size_t offset(int m, int n, int c) const {
        return (static_cast<std::size_t>(m) * num_points_ + n) * num_classes_ + c;
    }

    int num_members_ = 0;
    int num_points_ = 0;
    int num_classes_ = 0;
    std::vector<double> data_;
    std::optional<std::vector<int>> labels_;
};

/// Row-wise arithmetic mean over members; output row n is the ensemble
/// prediction for datapoint n.
Matrix ensemble_average(const PredictionSet& preds);

/// Applies PaddingPolicy to every row. epsilon = 0 is the identity.
PredictionSet pad_and_renormalize(const PredictionSet& preds, const PaddingPolicy& policy);

/// Pads a single row in place.
void pad_row(std::span<double> row, double epsilon);

/// Max-subtraction softmax; rejects non-finite logits.
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Tabular classification data: N x F features with integer labels in [0, C).
struct TabularDataset {
    Matrix features;           // N x F
    std::vector<int> labels;   // N
    int num_classes = 0;

    int num_points() const { return static_cast<int>(features.rows()); }
    int num_features() const { return static_cast<int>(features.cols()); }
    void validate() const;

    /// Row subset in the given index order.
    TabularDataset subset(std::span<const std::size_t> indices) const;
};

}  // namespace edl
