#include "edl/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edl {

namespace {

double pairwise_sum_impl(const double* data, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += data[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum_impl(data, half) + pairwise_sum_impl(data + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    return pairwise_sum_impl(values.data(), values.size());
}

double sample_stddev(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("sample_stddev: need at least 2 samples");
    const double mean = pairwise_mean(values);
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mean;
        sq[i] = d * d;
    }
    return std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1));
}

double standard_error(std::span<const double> values) {
    return sample_stddev(values) / std::sqrt(static_cast<double>(values.size()));
}

void affine_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias,
                    Matrix& out) {
    const std::size_t batch = in.rows();
    const std::size_t in_dim = in.cols();
    const std::size_t out_dim = weights.rows();
    if (weights.cols() != in_dim) throw std::invalid_argument("affine_forward: weight shape mismatch");
    if (bias.size() != out_dim) throw std::invalid_argument("affine_forward: bias shape mismatch");
    if (out.rows() != batch || out.cols() != out_dim) out = Matrix(batch, out_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.row(b).data();
        double* y = out.row(b).data();
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* w = weights.row(o).data();
            double acc = bias[o];
            for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
}

void affine_backward(const Matrix& in, const Matrix& weights, const Matrix& d_out,
                     Matrix& d_weights, std::span<double> d_bias, Matrix* d_in) {
    const std::size_t batch = in.rows();
    const std::size_t in_dim = in.cols();
    const std::size_t out_dim = weights.rows();
    if (d_out.rows() != batch || d_out.cols() != out_dim)
        throw std::invalid_argument("affine_backward: d_out shape mismatch");
    if (!d_weights.same_shape(weights)) d_weights = Matrix(out_dim, in_dim);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.row(b).data();
        const double* g = d_out.row(b).data();
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            double* dw = d_weights.row(o).data();
            for (std::size_t i = 0; i < in_dim; ++i) dw[i] += go * x[i];
            d_bias[o] += go;
        }
    }
    if (d_in != nullptr) {
        if (!d_in->same_shape(in)) *d_in = Matrix(batch, in_dim);
        d_in->fill(0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* g = d_out.row(b).data();
            double* dx = d_in->row(b).data();
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double go = g[o];
                if (go == 0.0) continue;
                const double* w = weights.row(o).data();
                for (std::size_t i = 0; i < in_dim; ++i) dx[i] += go * w[i];
            }
        }
    }
}

namespace {

std::vector<double> ranks_with_ties(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman_correlation: need two equal-length samples, n >= 2");
    const std::vector<double> ra = ranks_with_ties(a);
    const std::vector<double> rb = ranks_with_ties(b);
    const double ma = pairwise_mean(ra), mb = pairwise_mean(rb);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double xa = ra[i] - ma, xb = rb[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    if (da == 0.0 || db == 0.0)
        throw std::invalid_argument("spearman_correlation: constant input has no defined rank correlation");
    return num / std::sqrt(da * db);
}

}  // namespace edl
