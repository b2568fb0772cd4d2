#include <doctest.h>

#include <cmath>

#include "edl/common.hpp"
#include "edl/losses.hpp"
#include "edl/rng.hpp"
#include "helpers.hpp"

using namespace edl;

namespace {

PredictionSet correct_prob_set(const std::vector<std::vector<double>>& correct_probs, int c_count) {
    // Members distribute the leftover mass evenly over the wrong classes.
    const int m_count = static_cast<int>(correct_probs.size());
    const int n_count = static_cast<int>(correct_probs[0].size());
    PredictionSet preds(m_count, n_count, c_count);
    for (int m = 0; m < m_count; ++m)
        for (int n = 0; n < n_count; ++n) {
            const double p = correct_probs[m][n];
            auto row = preds.row(m, n);
            row[0] = p;
            for (int c = 1; c < c_count; ++c) row[c] = (1.0 - p) / (c_count - 1);
        }
    preds.set_labels(std::vector<int>(n_count, 0));
    return preds;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("point_loss basics") {
    const std::vector<double> onehot{1.0, 0.0, 0.0};
    CHECK(point_loss(LossKind::cross_entropy(), onehot, 0) == 0.0);
    CHECK(point_loss(LossKind::cross_entropy(), std::vector<double>{0.5, 0.5}, 0) ==
          doctest::Approx(std::numbers::ln2).epsilon(1e-15));
    const std::vector<double> uniform3{1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(point_loss(LossKind::squared_error(), uniform3, 0) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(point_loss(LossKind::brier(), uniform3, 0) ==
          point_loss(LossKind::squared_error(), uniform3, 0));
    CHECK(point_loss(LossKind::squared_error(), onehot, 0) == 0.0);
}

TEST_CASE("label smoothing spreads the target") {
    const LossKind smoothed = LossKind::cross_entropy(0.2);
    const std::vector<double> pred{0.7, 0.3};
    // targets (0.9, 0.1)
    const double expected = -0.9 * std::log(0.7) - 0.1 * std::log(0.3);
    CHECK(point_loss(smoothed, pred, 0) == doctest::Approx(expected).epsilon(1e-15));
    CHECK_THROWS_AS(LossKind::cross_entropy(1.0), std::invalid_argument);
    // A zero probability under a smoothed target is an error even off the label.
    CHECK_THROWS_WITH_AS(point_loss(smoothed, std::vector<double>{1.0, 0.0}, 0),
                         doctest::Contains("class 1"), std::invalid_argument);
}

TEST_CASE("point_loss label range") {
    CHECK_THROWS_AS(point_loss(LossKind::cross_entropy(), std::vector<double>{0.5, 0.5}, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(point_loss(LossKind::cross_entropy(), std::vector<double>{0.5, 0.5}, -1),
                    std::invalid_argument);
}

TEST_CASE("decompose: identical members have zero gap everywhere") {
    SeededRng rng(100);
    PredictionSet one = edltest::random_prediction_set(rng, 1, 8, 3);
    PredictionSet all(4, 8, 3);
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 8; ++n)
            std::copy(one.row(0, n).begin(), one.row(0, n).end(), all.row(m, n).begin());
    all.set_labels(one.labels());
    for (const auto kind : {LossKind::cross_entropy(), LossKind::squared_error()}) {
        const DecompositionReport report = decompose(kind, all);
        for (const auto& point : report.per_point) CHECK(std::abs(point.gap) <= 1e-12);
        CHECK(std::abs(report.jensen_gap) <= 1e-12);
    }
}

TEST_CASE("decompose cross-entropy worked example") {
    const PredictionSet preds = correct_prob_set({{0.5}, {1.0}}, 2);
    const DecompositionReport report = decompose(LossKind::cross_entropy(), preds);
    CHECK(report.avg_member_risk == doctest::Approx(0.346573590279972655).epsilon(1e-13));
    CHECK(report.ensemble_risk == doctest::Approx(0.287682072451780927).epsilon(1e-13));
    CHECK(report.jensen_gap == doctest::Approx(0.0588915178281917273).epsilon(1e-11));
}

TEST_CASE("decompose squared-error matches the variance identity") {
    PredictionSet preds(2, 1, 2);
    preds.row(0, 0)[0] = 1.0;
    preds.row(1, 0)[1] = 1.0;
    preds.set_labels({0});
    const DecompositionReport report = decompose(LossKind::squared_error(), preds);
    CHECK(report.jensen_gap == doctest::Approx(0.5).epsilon(1e-14));  // 0.25 per coordinate
    const auto closed = mse_gap_closed_form(preds);
    CHECK(closed[0] == doctest::Approx(report.jensen_gap).epsilon(1e-12));
}

TEST_CASE("decomposition identity holds per point and in aggregate") {
    SeededRng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const int m_count = trial % 2 == 0 ? 2 : 4;
        const int c_count = trial % 3 == 0 ? 2 : 10;
        const PredictionSet preds = edltest::random_prediction_set(rng, m_count, 16, c_count);
        for (const auto kind : {LossKind::cross_entropy(), LossKind::squared_error()}) {
            const DecompositionReport report = decompose(kind, preds);
            for (const auto& point : report.per_point) {
                CHECK(std::abs(point.avg_loss - point.gap - point.ens_loss) <= 1e-12);
                CHECK(point.gap >= -1e-12);  // strict convexity
            }
            CHECK(std::abs(report.avg_member_risk - report.jensen_gap - report.ensemble_risk) <=
                  1e-10);
            CHECK(report.jensen_gap >= -1e-12);
        }
    }
}

TEST_CASE("decompose names the failing point") {
    PredictionSet preds(1, 2, 2);
    preds.row(0, 0)[0] = 1.0;
    preds.row(0, 1)[1] = 1.0;  // zero probability on the label at point 1
    preds.set_labels({0, 0});
    CHECK_THROWS_WITH_AS(decompose(LossKind::cross_entropy(), preds),
                         doctest::Contains("point 1"), std::invalid_argument);
}

TEST_CASE("ce_gap_closed_form matches the decomposition") {
    SUBCASE("equal members give zero") {
        const PredictionSet preds = correct_prob_set({{0.4, 0.7}, {0.4, 0.7}, {0.4, 0.7}}, 3);
        for (double g : ce_gap_closed_form(preds)) CHECK(std::abs(g) <= 1e-15);
    }
    SUBCASE("worked example") {
        const PredictionSet preds = correct_prob_set({{0.5}, {1.0}}, 2);
        CHECK(ce_gap_closed_form(preds)[0] ==
              doctest::Approx(0.0588915178281917273).epsilon(1e-13));
    }
    SUBCASE("random equivalence") {
        SeededRng rng(102);
        for (int trial = 0; trial < 200; ++trial) {
            const PredictionSet preds = edltest::random_prediction_set(rng, 3, 8, 4);
            const DecompositionReport report = decompose(LossKind::cross_entropy(), preds);
            const auto closed = ce_gap_closed_form(preds);
            for (int n = 0; n < 8; ++n)
                CHECK(std::abs(closed[n] - report.per_point[n].gap) <= 1e-10);
        }
    }
}

TEST_CASE("ce gap ignores how incorrect-class mass is distributed") {
    SeededRng rng(103);
    PredictionSet a = edltest::random_prediction_set(rng, 3, 6, 4);
    PredictionSet b = a;
    // Redistribute wrong-class mass arbitrarily, keeping the correct class fixed.
    for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 6; ++n) {
            const int y = a.labels()[n];
            auto row = b.row(m, n);
            double wrong = 1.0 - row[y];
            std::vector<double> weights;
            double total = 0.0;
            for (int c = 0; c < 4; ++c) {
                if (c == y) continue;
                weights.push_back(rng.next_open());
                total += weights.back();
            }
            int w = 0;
            for (int c = 0; c < 4; ++c)
                if (c != y) row[c] = wrong * weights[w++] / total;
        }
    const auto gap_a = decompose(LossKind::cross_entropy(), a);
    const auto gap_b = decompose(LossKind::cross_entropy(), b);
    for (int n = 0; n < 6; ++n)
        CHECK(gap_a.per_point[n].gap == doctest::Approx(gap_b.per_point[n].gap).epsilon(1e-12));
}

TEST_CASE("mse_gap_closed_form") {
    SUBCASE("identical members give zero") {
        const PredictionSet preds = correct_prob_set({{0.6}, {0.6}}, 2);
        CHECK(std::abs(mse_gap_closed_form(preds)[0]) <= 1e-15);
    }
    SUBCASE("scale factors (M-1)/M against the unbiased variance") {
        PredictionSet two(2, 1, 2);
        two.row(0, 0)[0] = 1.0;
        two.row(1, 0)[1] = 1.0;
        // unbiased variance per coordinate of {0,1} is 0.5
        CHECK(mse_gap_closed_form(two)[0] == doctest::Approx(2 * 0.5 * 0.5).epsilon(1e-14));

        PredictionSet four(4, 1, 2);
        four.row(0, 0)[0] = 1.0;
        four.row(1, 0)[0] = 1.0;
        four.row(2, 0)[1] = 1.0;
        four.row(3, 0)[1] = 1.0;
        // unbiased variance per coordinate of {1,1,0,0} is 1/3, scaled by 3/4
        CHECK(mse_gap_closed_form(four)[0] ==
              doctest::Approx(2 * 0.75 * (1.0 / 3.0)).epsilon(1e-14));
    }
    SUBCASE("random equivalence with the decomposition") {
        SeededRng rng(104);
        for (int trial = 0; trial < 200; ++trial) {
            const PredictionSet preds = edltest::random_prediction_set(rng, 4, 8, 3);
            const DecompositionReport report = decompose(LossKind::squared_error(), preds);
            const auto closed = mse_gap_closed_form(preds);
            for (int n = 0; n < 8; ++n)
                CHECK(std::abs(closed[n] - report.per_point[n].gap) <= 1e-10);
        }
    }
    SUBCASE("single member is an error") {
        SeededRng rng(105);
        const PredictionSet preds = edltest::random_prediction_set(rng, 1, 2, 2);
        CHECK_THROWS_AS(mse_gap_closed_form(preds), std::invalid_argument);
    }
}

TEST_CASE("metrics on a perfect ensemble") {
    PredictionSet preds(2, 5, 3);
    std::vector<int> labels{0, 1, 2, 1, 0};
    for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 5; ++n) preds.row(m, n)[labels[n]] = 1.0;
    preds.set_labels(labels);
    const MetricsReport report = metrics(preds);
    CHECK(report.accuracy == 1.0);
    CHECK(report.nll == 0.0);
    CHECK(report.brier == 0.0);
    CHECK(report.ece == 0.0);
}

TEST_CASE("metrics on a calibrated single bin") {
    PredictionSet preds(1, 10, 2);
    std::vector<int> labels(10, 1);
    for (int n = 0; n < 10; ++n) {
        preds.row(0, n)[0] = 0.8;
        preds.row(0, n)[1] = 0.2;
        if (n < 8) labels[n] = 0;  // confidence 0.8, accuracy 0.8
    }
    preds.set_labels(labels);
    const MetricsReport report = metrics(preds);
    CHECK(report.accuracy == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(report.ece == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metrics ECE with one overconfident bin") {
    PredictionSet preds(1, 2, 2);
    for (int n = 0; n < 2; ++n) {
        preds.row(0, n)[0] = 1.0 - 1e-12;  // full confidence, NLL still finite
        preds.row(0, n)[1] = 1e-12;
    }
    preds.set_labels({0, 1});  // one correct, one wrong
    const MetricsReport report = metrics(preds);
    CHECK(report.accuracy == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(report.ece == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("argmax ties break toward the lowest class") {
    PredictionSet preds(1, 1, 2);
    preds.row(0, 0)[0] = 0.5;
    preds.row(0, 0)[1] = 0.5;
    preds.set_labels({0});
    CHECK(metrics(preds).accuracy == 1.0);
    preds.set_labels({1});
    CHECK(metrics(preds).accuracy == 0.0);
}

TEST_CASE("auxiliary diversity on identical members") {
    SeededRng rng(106);
    PredictionSet one = edltest::random_prediction_set(rng, 1, 6, 3);
    PredictionSet all(3, 6, 3);
    for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 6; ++n)
            std::copy(one.row(0, n).begin(), one.row(0, n).end(), all.row(m, n).begin());
    const AuxiliaryDiversity aux = auxiliary_diversity(all);
    REQUIRE(aux.pairwise_correlation.has_value());
    CHECK(*aux.pairwise_correlation == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(aux.avg_pairwise_kl) <= 1e-12);
    CHECK(aux.avg_cosine_similarity == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("auxiliary diversity on orthogonal one-hot members") {
    PredictionSet preds(2, 4, 2);
    for (int n = 0; n < 4; ++n) {
        preds.row(0, n)[0] = 1.0;
        preds.row(1, n)[1] = 1.0;
    }
    const AuxiliaryDiversity aux = auxiliary_diversity(preds);
    CHECK(aux.avg_cosine_similarity == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("auxiliary diversity cosine worked example") {
    PredictionSet preds(2, 1, 2);
    preds.row(0, 0)[0] = 0.6;
    preds.row(0, 0)[1] = 0.4;
    preds.row(1, 0)[0] = 0.8;
    preds.row(1, 0)[1] = 0.2;
    const AuxiliaryDiversity aux = auxiliary_diversity(preds);
    CHECK(aux.avg_cosine_similarity == doctest::Approx(0.941741911594837454).epsilon(1e-14));
}

TEST_CASE("constant member predictions make the correlation undefined") {
    PredictionSet preds(2, 3, 2);
    for (int n = 0; n < 3; ++n) {
        preds.row(0, n)[0] = 0.5;
        preds.row(0, n)[1] = 0.5;  // member 0 constant everywhere
        preds.row(1, n)[0] = 0.2 + 0.1 * n;
        preds.row(1, n)[1] = 0.8 - 0.1 * n;
    }
    const AuxiliaryDiversity aux = auxiliary_diversity(preds);
    CHECK_FALSE(aux.pairwise_correlation.has_value());
}

TEST_CASE("jensen gap tracks the auxiliary metrics with the expected signs") {
    // Ensembles with graded noise: rank correlation of the CE gap should be
    // positive against pairwise KL and negative against correlation / cosine.
    SeededRng rng(107);
    const int n_count = 64, c_count = 4, m_count = 4;
    std::vector<double> gaps, kls, corrs, cosines;
    Matrix base(n_count, c_count);
    for (double& v : base.data()) v = 1.5 * rng.normal();
    for (int level = 0; level <= 8; ++level) {
        PredictionSet preds(m_count, n_count, c_count);
        std::vector<int> labels(n_count);
        SeededRng noise = rng.child(level);
        for (int n = 0; n < n_count; ++n) labels[n] = static_cast<int>(noise.below(c_count));
        std::vector<double> logits(c_count);
        for (int m = 0; m < m_count; ++m)
            for (int n = 0; n < n_count; ++n) {
                for (int c = 0; c < c_count; ++c)
                    logits[c] = base.at(n, c) + 0.15 * level * noise.normal();
                softmax_into(logits, preds.row(m, n));
            }
        preds.set_labels(labels);
        gaps.push_back(decompose(LossKind::cross_entropy(), preds).jensen_gap);
        const AuxiliaryDiversity aux = auxiliary_diversity(preds);
        REQUIRE(aux.pairwise_correlation.has_value());
        kls.push_back(aux.avg_pairwise_kl);
        corrs.push_back(*aux.pairwise_correlation);
        cosines.push_back(aux.avg_cosine_similarity);
    }
    CHECK(spearman_correlation(gaps, kls) > 0.0);
    CHECK(spearman_correlation(gaps, corrs) < 0.0);
    CHECK(spearman_correlation(gaps, cosines) < 0.0);
}

}  // TEST_SUITE
