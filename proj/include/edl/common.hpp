#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace edl {

/// Pairwise (tree) summation with a fixed association order.
/// Used for all aggregate reductions so results are reproducible and
/// accurate enough for the 1e-10 identity checks downstream.
double pairwise_sum(std::span<const double> values);

inline double pairwise_mean(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("pairwise_mean: empty input");
    return pairwise_sum(values) / static_cast<double>(values.size());
}

/// Sample standard deviation (n-1 denominator).
double sample_stddev(std::span<const double> values);

/// Standard error of the mean over the given samples.
double standard_error(std::span<const double> values);

/// Dense row-major matrix of doubles. Deliberately minimal; the model code
/// only needs construction, element access and a handful of product shapes.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out(B x O) = in(B x I) * weights(O x I)^T + bias(O), the affine layer shape.
void affine_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias,
                    Matrix& out);

/// Accumulates d_weights += d_out^T * in and d_bias += column sums of d_out;
/// writes d_in = d_out * weights when d_in is non-null.
void affine_backward(const Matrix& in, const Matrix& weights, const Matrix& d_out,
                     Matrix& d_weights, std::span<double> d_bias, Matrix* d_in);

/// Spearman rank correlation; average ranks on ties.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace edl
