#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edl/losses.hpp"
#include "edl/rng.hpp"
#include "edl/simplex.hpp"

namespace edl {

/// Gaussian kernel density on a fixed grid; bandwidth defaults to
/// Silverman's rule on the sample.
std::vector<double> gaussian_kde(std::span<const double> samples, std::span<const double> grid,
                                 std::optional<double> bandwidth = std::nullopt);
double silverman_bandwidth(std::span<const double> samples);

struct LogisticFit {
    double intercept = 0.0;
    double slope = 0.0;
    bool converged = false;
    bool degenerate = false;  // all-positive or all-negative targets
    int iterations = 0;
};

/// One-feature logistic regression fit by damped Newton steps with an L2
/// penalty (strength 1e-6) so separation still has a finite optimum.
/// Convergence: gradient infinity norm below 1e-8.
LogisticFit fit_logistic(std::span<const double> x, std::span<const int> y);

struct CounterfactualCurve {
    double gamma = 0.0;
    std::vector<double> density;   // Gaussian-smoothed gap density on the grid
    std::vector<double> accuracy;  // fitted counterfactual-accuracy curve
    LogisticFit fit;
};

struct CounterfactualReport {
    std::vector<double> grid;  // shared per-point CE Jensen gap axis
    std::vector<CounterfactualCurve> curves;
};

/// For each intervened run: the distribution of per-point CE Jensen gaps and
/// a logistic fit of the baseline ensemble's per-point correctness against
/// those gaps. The baseline is the gamma = 0 run; all sets must share labels
/// and datapoint order.
CounterfactualReport counterfactual_analysis(const PredictionSet& baseline,
                                             const std::map<double, const PredictionSet*>& intervened,
                                             int grid_size = 201);

std::string counterfactual_to_csv(const CounterfactualReport& report);

enum class Verdict { Hurts, Neutral, Helps };
std::string verdict_name(Verdict v);

struct RunMetricsEntry {
    std::string regularizer;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
};

struct SweepCell {
    std::string regularizer;
    double gamma = 0.0;
    int num_runs = 0;
    double mean = 0.0;
    double sem = 0.0;
    Verdict verdict = Verdict::Neutral;
};

struct SweepSummary {
    std::string metric;  // accuracy | nll | brier | ece
    double baseline_mean = 0.0;
    double baseline_sem = 0.0;  // over all gamma = 0 runs
    std::vector<SweepCell> cells;
};

/// Two-standard-error verdicts against the pooled gamma = 0 baseline.
/// Direction-aware: higher accuracy is better; lower nll/brier/ece is better.
/// Requires at least two baseline runs.
SweepSummary sweep_summary(const std::vector<RunMetricsEntry>& runs, const std::string& metric);

std::string summary_to_json(const std::vector<SweepSummary>& summaries);

struct ScatterRow {
    std::string regularizer;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    double jensen_gap = 0.0;
    double avg_member_risk = 0.0;
    double ensemble_risk = 0.0;
    double residual = 0.0;  // avg - gap - ens, identity check per row
};

struct RunPredictions {
    std::string regularizer;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    const PredictionSet* preds = nullptr;
};

std::vector<ScatterRow> decomposition_scatter(const std::vector<RunPredictions>& runs,
                                              const LossKind& loss = LossKind::cross_entropy());
std::string scatter_to_csv(const std::vector<ScatterRow>& rows);

/// One candidate ensemble member drawn from stored predictions.
struct PoolEntry {
    std::string tag;  // architecture / run identity
    Matrix probs;     // N x C
};

struct PoolSpec {
    int ensemble_size = 4;
    int num_quantiles = 10;  // NLL deciles for performance matching
    enum class Mode { Homogeneous, Heterogeneous };
    Mode mode = Mode::Homogeneous;
    int num_draws = 10;
};

/// Homogeneous mode draws members sharing a tag; heterogeneous mode draws
/// distinct-tag members whose individual NLL falls in the same quantile
/// bucket. Sampling is without replacement within an ensemble.
std::vector<PredictionSet> assemble_from_pool(const std::vector<PoolEntry>& pool,
                                              std::span<const int> labels, const PoolSpec& spec,
                                              SeededRng& rng);

}  // namespace edl
