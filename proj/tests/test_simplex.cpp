#include <doctest.h>

#include <cmath>

#include "edl/rng.hpp"
#include "edl/simplex.hpp"
#include "helpers.hpp"

using namespace edl;

namespace {

PredictionSet from_rows(int m_count, int n_count, int c_count,
                        const std::vector<std::vector<double>>& rows) {
    PredictionSet preds(m_count, n_count, c_count);
    std::size_t r = 0;
    for (int m = 0; m < m_count; ++m)
        for (int n = 0; n < n_count; ++n) {
            std::copy(rows[r].begin(), rows[r].end(), preds.row(m, n).begin());
            ++r;
        }
    return preds;
}

double l1_to_uniform(std::span<const double> row) {
    const double u = 1.0 / row.size();
    double d = 0.0;
    for (double p : row) d += std::abs(p - u);
    return d;
}

}  // namespace

TEST_SUITE("simplex") {

TEST_CASE("ensemble_average identity for a single member") {
    SeededRng rng(1);
    const PredictionSet preds = edltest::random_prediction_set(rng, 1, 5, 4);
    const Matrix avg = ensemble_average(preds);
    for (int n = 0; n < 5; ++n)
        for (int c = 0; c < 4; ++c) CHECK(avg.at(n, c) == preds.at(0, n, c));
}

TEST_CASE("ensemble_average of opposing one-hot members is uniform") {
    const PredictionSet preds = from_rows(2, 1, 2, {{1.0, 0.0}, {0.0, 1.0}});
    const Matrix avg = ensemble_average(preds);
    CHECK(avg.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(avg.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("ensemble_average arithmetic example") {
    const PredictionSet preds = from_rows(2, 1, 2, {{0.6, 0.4}, {0.8, 0.2}});
    const Matrix avg = ensemble_average(preds);
    CHECK(avg.at(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(avg.at(0, 1) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("ensemble_average rows satisfy the simplex invariants") {
    SeededRng rng(2);
    const PredictionSet preds = edltest::random_prediction_set(rng, 4, 16, 5);
    const Matrix avg = ensemble_average(preds);
    for (std::size_t n = 0; n < avg.rows(); ++n)
        CHECK_NOTHROW(validate_simplex_row(avg.row(n), "avg"));
}

TEST_CASE("padding with epsilon zero is the identity") {
    SeededRng rng(3);
    const PredictionSet preds = edltest::random_prediction_set(rng, 2, 4, 3);
    const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{0.0});
    CHECK(padded.data() == preds.data());
}

TEST_CASE("padding a one-hot row") {
    const PredictionSet preds = from_rows(1, 1, 2, {{1.0, 0.0}});
    const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{1e-10});
    CHECK(padded.at(0, 0, 0) == doctest::Approx(0.9999999999).epsilon(1e-15));
    CHECK(padded.at(0, 0, 1) == doctest::Approx(9.999999998e-11).epsilon(1e-9));
    CHECK(padded.at(0, 0, 0) + padded.at(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("uniform rows are a fixed point of padding") {
    const double third = 1.0 / 3.0;
    const PredictionSet preds = from_rows(1, 1, 3, {{third, third, third}});
    const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{1e-3});
    for (int c = 0; c < 3; ++c)
        CHECK(padded.at(0, 0, c) == doctest::Approx(third).epsilon(1e-14));
}

TEST_CASE("padding rejects epsilon >= 1/C") {
    SeededRng rng(4);
    const PredictionSet preds = edltest::random_prediction_set(rng, 1, 1, 4);
    CHECK_THROWS_AS(pad_and_renormalize(preds, PaddingPolicy{0.25}), std::invalid_argument);
    CHECK_THROWS_AS(pad_and_renormalize(preds, PaddingPolicy{-1e-3}), std::invalid_argument);
}

TEST_CASE("larger epsilon moves rows toward uniform") {
    SeededRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const PredictionSet preds = edltest::random_prediction_set(rng, 1, 1, 4, false, 3.0);
        double prev = l1_to_uniform(preds.row(0, 0));
        for (double eps : {1e-6, 1e-4, 1e-2, 0.2}) {
            const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{eps});
            const double dist = l1_to_uniform(padded.row(0, 0));
            CHECK(dist <= prev + 1e-15);
            prev = dist;
        }
    }
}

TEST_CASE("softmax of equal logits is uniform") {
    const auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto q = softmax(std::vector<double>{3.7, 3.7});
    CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax high-confidence example") {
    const auto p = softmax(std::vector<double>{10.0, 0.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.999909208384340978).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(4.53958078295109094e-5).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(4.53958078295109094e-5).epsilon(1e-12));
}

TEST_CASE("softmax is invariant to constant logit shifts") {
    SeededRng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> logits(5);
        for (double& z : logits) z = 4.0 * rng.normal();
        const auto base = softmax(logits);
        const double shift = 10.0 * rng.normal();
        for (double& z : logits) z += shift;
        const auto shifted = softmax(logits);
        for (int c = 0; c < 5; ++c) CHECK(std::abs(base[c] - shifted[c]) <= 1e-12);
    }
}

TEST_CASE("softmax rejects non-finite logits") {
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
}

TEST_CASE("ProbVector invariants") {
    CHECK_NOTHROW(ProbVector::checked({0.25, 0.75}));
    CHECK_THROWS_AS(ProbVector::checked({1.0}), std::invalid_argument);             // C < 2
    CHECK_THROWS_AS(ProbVector::checked({-0.1, 1.1}), std::invalid_argument);       // negative
    CHECK_THROWS_AS(ProbVector::checked({0.6, 0.6}), std::invalid_argument);        // sum != 1
    CHECK_THROWS_AS(ProbVector::checked({0.5, 0.5 + 1e-8}), std::invalid_argument); // tolerance
    CHECK_NOTHROW(ProbVector::checked({0.5, 0.5 + 1e-10}));
}

TEST_CASE("PredictionSet label validation") {
    PredictionSet preds(1, 2, 3);
    for (int n = 0; n < 2; ++n) preds.row(0, n)[0] = 1.0;
    CHECK_THROWS_AS(preds.set_labels({0}), std::invalid_argument);
    CHECK_THROWS_AS(preds.set_labels({0, 3}), std::invalid_argument);
    CHECK_NOTHROW(preds.set_labels({0, 2}));
    CHECK_THROWS_AS(PredictionSet(0, 1, 2), std::invalid_argument);
    CHECK_THROWS_AS(PredictionSet(1, 1, 1), std::invalid_argument);
}

TEST_CASE("PredictionSet validate finds bad rows") {
    PredictionSet preds(2, 2, 2);
    for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 2; ++n) preds.row(m, n)[0] = 1.0;
    CHECK_NOTHROW(preds.validate());
    preds.at(1, 0, 0) = 0.7;
    CHECK_THROWS_WITH_AS(preds.validate(),
                         doctest::Contains("member 1 point 0"), std::invalid_argument);
}

TEST_CASE("TabularDataset validation and subsetting") {
    TabularDataset data;
    data.features = Matrix(3, 2);
    data.labels = {0, 1, 0};
    data.num_classes = 2;
    data.features.at(2, 1) = 5.0;
    CHECK_NOTHROW(data.validate());
    const std::vector<std::size_t> idx{2, 0};
    const TabularDataset sub = data.subset(idx);
    CHECK(sub.num_points() == 2);
    CHECK(sub.features.at(0, 1) == 5.0);
    CHECK(sub.labels[0] == 0);
    data.features.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(data.validate(), std::invalid_argument);
}

}  // TEST_SUITE
