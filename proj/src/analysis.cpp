#include "edl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "edl/io.hpp"

namespace edl {

using nlohmann::json;

double silverman_bandwidth(std::span<const double> samples) {
    if (samples.size() < 2) return 1e-6;
    const double sd = sample_stddev(samples);
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const auto quantile = [&](double q) {
        const double pos = q * (sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    const double h = 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
    if (!(h > 0.0)) {
        // Degenerate sample (all values equal): keep the density a narrow
        // finite spike instead of a delta.
        const double scale = std::max(1.0, std::abs(sorted[0]));
        return 1e-6 * scale;
    }
    return h;
}

std::vector<double> gaussian_kde(std::span<const double> samples, std::span<const double> grid,
                                 std::optional<double> bandwidth) {
    if (samples.empty()) throw std::invalid_argument("gaussian_kde: empty sample");
    const double h = bandwidth.value_or(silverman_bandwidth(samples));
    if (!(h > 0.0)) throw std::invalid_argument("gaussian_kde: bandwidth must be positive");
    const double norm = 1.0 / (samples.size() * h * std::sqrt(2.0 * std::numbers::pi_v<double>));
    std::vector<double> density(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (double x : samples) {
            const double z = (grid[g] - x) / h;
            acc += std::exp(-0.5 * z * z);
        }
        density[g] = norm * acc;
    }
    return density;
}

LogisticFit fit_logistic(std::span<const double> x, std::span<const int> y) {
    if (x.size() != y.size() || x.empty())
        throw std::invalid_argument("fit_logistic: need equal-length non-empty samples");
    LogisticFit fit;
    bool any_pos = false, any_neg = false;
    for (int v : y) (v != 0 ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) {
        fit.degenerate = true;
        fit.intercept = any_pos ? 40.0 : -40.0;  // saturated constant curve
        fit.slope = 0.0;
        fit.converged = true;
        return fit;
    }

    constexpr double l2 = 1e-6;
    constexpr double tol = 1e-8;
    constexpr int max_iters = 500;
    const std::size_t n = x.size();
    double w0 = 0.0, w1 = 0.0;

    const auto nll = [&](double a, double b) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = a + b * x[i];
            // log(1 + exp(z)) - y z, computed stably
            const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
            total += softplus - (y[i] != 0 ? z : 0.0);
        }
        return total + 0.5 * l2 * (a * a + b * b);
    };

    double current = nll(w0, w1);
    for (int iter = 0; iter < max_iters; ++iter) {
        double g0 = l2 * w0, g1 = l2 * w1;
        double h00 = l2, h01 = 0.0, h11 = l2;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = w0 + w1 * x[i];
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double r = p - (y[i] != 0 ? 1.0 : 0.0);
            const double s = std::max(p * (1.0 - p), 1e-12);
            g0 += r;
            g1 += r * x[i];
            h00 += s;
            h01 += s * x[i];
            h11 += s * x[i] * x[i];
        }
        fit.iterations = iter;
        if (std::max(std::abs(g0), std::abs(g1)) < tol) {
            fit.converged = true;
            break;
        }
        const double det = h00 * h11 - h01 * h01;
        double d0 = (h11 * g0 - h01 * g1) / det;
        double d1 = (h00 * g1 - h01 * g0) / det;
        double step = 1.0;
        for (int back = 0; back < 50; ++back) {
            const double trial = nll(w0 - step * d0, w1 - step * d1);
            if (trial <= current) {
                w0 -= step * d0;
                w1 -= step * d1;
                current = trial;
                break;
            }
            step *= 0.5;
        }
    }
    fit.intercept = w0;
    fit.slope = w1;
    return fit;
}

namespace {

std::vector<int> baseline_correct(const PredictionSet& baseline) {
    const Matrix ens = ensemble_average(baseline);
    const auto& labels = baseline.labels();
    std::vector<int> correct(baseline.num_points());
    for (int n = 0; n < baseline.num_points(); ++n) {
        const auto row = ens.row(n);
        int best = 0;
        for (int c = 1; c < baseline.num_classes(); ++c)
            if (row[c] > row[best]) best = c;
        correct[n] = best == labels[n] ? 1 : 0;
    }
    return correct;
}

std::vector<double> per_point_ce_gap(const PredictionSet& preds) {
    const PredictionSet padded = pad_and_renormalize(preds, PaddingPolicy{1e-10});
    const DecompositionReport report = decompose(LossKind::cross_entropy(), padded);
    std::vector<double> gaps(report.per_point.size());
    for (std::size_t n = 0; n < gaps.size(); ++n) gaps[n] = report.per_point[n].gap;
    return gaps;
}

}  // namespace

CounterfactualReport counterfactual_analysis(const PredictionSet& baseline,
                                             const std::map<double, const PredictionSet*>& intervened,
                                             int grid_size) {
    if (grid_size < 2) throw std::invalid_argument("counterfactual_analysis: grid_size too small");
    if (intervened.empty())
        throw std::invalid_argument("counterfactual_analysis: no intervened runs given");
    const auto& labels = baseline.labels();
    for (const auto& [gamma, preds] : intervened) {
        if (preds == nullptr) throw std::invalid_argument("counterfactual_analysis: null run");
        if (preds->num_points() != baseline.num_points() ||
            preds->num_classes() != baseline.num_classes())
            throw std::invalid_argument("counterfactual_analysis: run shape mismatch");
        if (preds->labels() != labels)
            throw std::invalid_argument("counterfactual_analysis: runs must share labels and order");
    }

    const std::vector<int> correct = baseline_correct(baseline);

    std::vector<std::vector<double>> gap_samples;
    std::vector<double> bandwidths;
    gap_samples.reserve(intervened.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    double max_bw = 0.0;
    for (const auto& [gamma, preds] : intervened) {
        gap_samples.push_back(per_point_ce_gap(*preds));
        const auto& gaps = gap_samples.back();
        lo = std::min(lo, *std::min_element(gaps.begin(), gaps.end()));
        hi = std::max(hi, *std::max_element(gaps.begin(), gaps.end()));
        bandwidths.push_back(silverman_bandwidth(gaps));
        max_bw = std::max(max_bw, bandwidths.back());
    }
    // Extend the axis so the kernels integrate to ~1 on the grid.
    lo -= 4.0 * max_bw;
    hi += 4.0 * max_bw;
    if (hi <= lo) hi = lo + 1e-9;
    CounterfactualReport report;
    report.grid.resize(grid_size);
    for (int g = 0; g < grid_size; ++g)
        report.grid[g] = lo + (hi - lo) * g / static_cast<double>(grid_size - 1);

    std::size_t idx = 0;
    for (const auto& [gamma, preds] : intervened) {
        CounterfactualCurve curve;
        curve.gamma = gamma;
        curve.density = gaussian_kde(gap_samples[idx], report.grid, bandwidths[idx]);
        curve.fit = fit_logistic(gap_samples[idx], correct);
        curve.accuracy.resize(grid_size);
        for (int g = 0; g < grid_size; ++g) {
            const double z = curve.fit.intercept + curve.fit.slope * report.grid[g];
            curve.accuracy[g] = 1.0 / (1.0 + std::exp(-z));
        }
        report.curves.push_back(std::move(curve));
        ++idx;
    }
    return report;
}

std::string counterfactual_to_csv(const CounterfactualReport& report) {
    std::string out = "gamma,gap,density,counterfactual_accuracy\n";
    for (const auto& curve : report.curves)
        for (std::size_t g = 0; g < report.grid.size(); ++g) {
            out += format_double(curve.gamma);
            out += ',';
            out += format_double(report.grid[g]);
            out += ',';
            out += format_double(curve.density[g]);
            out += ',';
            out += format_double(curve.accuracy[g]);
            out += '\n';
        }
    return out;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Hurts: return "hurts";
        case Verdict::Neutral: return "neutral";
        case Verdict::Helps: return "helps";
    }
    return "?";
}

namespace {

double metric_value(const MetricsReport& m, const std::string& metric) {
    if (metric == "accuracy") return m.accuracy;
    if (metric == "nll") return m.nll;
    if (metric == "brier") return m.brier;
    if (metric == "ece") return m.ece;
    throw std::invalid_argument("unknown metric: " + metric);
}

}  // namespace

SweepSummary sweep_summary(const std::vector<RunMetricsEntry>& runs, const std::string& metric) {
    const bool higher_better = metric == "accuracy";
    std::vector<double> baseline_values;
    for (const auto& run : runs)
        if (run.gamma == 0.0) baseline_values.push_back(metric_value(run.metrics, metric));
    if (baseline_values.size() < 2)
        throw std::invalid_argument("sweep_summary: need at least 2 gamma = 0 runs for the SEM");

    SweepSummary summary;
    summary.metric = metric;
    summary.baseline_mean = pairwise_mean(baseline_values);
    summary.baseline_sem = standard_error(baseline_values);
    const double upper = summary.baseline_mean + 2.0 * summary.baseline_sem;
    const double lower = summary.baseline_mean - 2.0 * summary.baseline_sem;

    std::map<std::pair<std::string, double>, std::vector<double>> cells;
    for (const auto& run : runs)
        cells[{run.regularizer, run.gamma}].push_back(metric_value(run.metrics, metric));

    for (const auto& [key, values] : cells) {
        SweepCell cell;
        cell.regularizer = key.first;
        cell.gamma = key.second;
        cell.num_runs = static_cast<int>(values.size());
        cell.mean = pairwise_mean(values);
        cell.sem = values.size() >= 2 ? standard_error(values) : 0.0;
        if (higher_better) {
            if (cell.mean > upper) cell.verdict = Verdict::Helps;
            else if (cell.mean < lower) cell.verdict = Verdict::Hurts;
            else cell.verdict = Verdict::Neutral;
        } else {
            if (cell.mean < lower) cell.verdict = Verdict::Helps;
            else if (cell.mean > upper) cell.verdict = Verdict::Hurts;
            else cell.verdict = Verdict::Neutral;
        }
        summary.cells.push_back(std::move(cell));
    }
    return summary;
}

std::string summary_to_json(const std::vector<SweepSummary>& summaries) {
    json out = json::array();
    for (const auto& summary : summaries) {
        json s;
        s["metric"] = summary.metric;
        s["baseline_mean"] = summary.baseline_mean;
        s["baseline_sem"] = summary.baseline_sem;
        json cells = json::array();
        for (const auto& cell : summary.cells) {
            cells.push_back({{"regularizer", cell.regularizer},
                             {"gamma", cell.gamma},
                             {"num_runs", cell.num_runs},
                             {"mean", cell.mean},
                             {"sem", cell.sem},
                             {"verdict", verdict_name(cell.verdict)}});
        }
        s["cells"] = std::move(cells);
        out.push_back(std::move(s));
    }
    return out.dump(2) + "\n";
}

std::vector<ScatterRow> decomposition_scatter(const std::vector<RunPredictions>& runs,
                                              const LossKind& loss) {
    std::vector<ScatterRow> rows;
    rows.reserve(runs.size());
    for (const auto& run : runs) {
        if (run.preds == nullptr) throw std::invalid_argument("decomposition_scatter: null run");
        const DecompositionReport report = decompose(loss, *run.preds);
        ScatterRow row;
        row.regularizer = run.regularizer;
        row.gamma = run.gamma;
        row.seed = run.seed;
        row.jensen_gap = report.jensen_gap;
        row.avg_member_risk = report.avg_member_risk;
        row.ensemble_risk = report.ensemble_risk;
        row.residual = report.avg_member_risk - report.jensen_gap - report.ensemble_risk;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string scatter_to_csv(const std::vector<ScatterRow>& rows) {
    std::string out = "regularizer,gamma,seed,jensen_gap,avg_member_risk,ensemble_risk,residual\n";
    for (const auto& row : rows) {
        out += row.regularizer;
        out += ',';
        out += format_double(row.gamma);
        out += ',';
        out += std::to_string(row.seed);
        out += ',';
        out += format_double(row.jensen_gap);
        out += ',';
        out += format_double(row.avg_member_risk);
        out += ',';
        out += format_double(row.ensemble_risk);
        out += ',';
        out += format_double(row.residual);
        out += '\n';
    }
    return out;
}

std::vector<PredictionSet> assemble_from_pool(const std::vector<PoolEntry>& pool,
                                              std::span<const int> labels, const PoolSpec& spec,
                                              SeededRng& rng) {
    if (pool.empty()) throw std::invalid_argument("assemble_from_pool: empty pool");
    if (spec.ensemble_size < 1 || spec.num_draws < 1 || spec.num_quantiles < 1)
        throw std::invalid_argument("assemble_from_pool: invalid spec");
    const std::size_t n_points = pool[0].probs.rows();
    const std::size_t n_classes = pool[0].probs.cols();
    if (labels.size() != n_points)
        throw std::invalid_argument("assemble_from_pool: label count mismatch");
    for (const auto& entry : pool)
        if (entry.probs.rows() != n_points || entry.probs.cols() != n_classes)
            throw std::invalid_argument("assemble_from_pool: pool members must share N and C");

    const int m_count = spec.ensemble_size;
    const auto build = [&](std::span<const std::size_t> chosen) {
        PredictionSet preds(m_count, static_cast<int>(n_points), static_cast<int>(n_classes));
        for (int m = 0; m < m_count; ++m) {
            const Matrix& probs = pool[chosen[m]].probs;
            for (std::size_t n = 0; n < n_points; ++n)
                std::copy(probs.row(n).begin(), probs.row(n).end(),
                          preds.row(m, static_cast<int>(n)).begin());
        }
        preds.set_labels(std::vector<int>(labels.begin(), labels.end()));
        return preds;
    };

    std::vector<PredictionSet> ensembles;
    ensembles.reserve(spec.num_draws);

    if (spec.mode == PoolSpec::Mode::Homogeneous) {
        std::map<std::string, std::vector<std::size_t>> by_tag;
        for (std::size_t i = 0; i < pool.size(); ++i) by_tag[pool[i].tag].push_back(i);
        std::vector<const std::vector<std::size_t>*> eligible;
        for (const auto& [tag, members] : by_tag)
            if (static_cast<int>(members.size()) >= m_count) eligible.push_back(&members);
        if (eligible.empty())
            throw std::invalid_argument("assemble_from_pool: no tag has " +
                                        std::to_string(m_count) + " dumps for homogeneous mode");
        for (int d = 0; d < spec.num_draws; ++d) {
            const auto& members = *eligible[rng.below(eligible.size())];
            const auto picks = rng.sample_without_replacement(members.size(), m_count);
            std::vector<std::size_t> chosen(m_count);
            for (int m = 0; m < m_count; ++m) chosen[m] = members[picks[m]];
            ensembles.push_back(build(chosen));
        }
        return ensembles;
    }

    // Heterogeneous: bucket by NLL quantile, then draw distinct tags within
    // one bucket.
    std::vector<double> nll(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        nll[i] = metrics_single(pool[i].probs, labels).nll;
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return nll[a] < nll[b];
    });
    std::vector<std::vector<std::size_t>> buckets(spec.num_quantiles);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const std::size_t b =
            std::min<std::size_t>(rank * spec.num_quantiles / order.size(),
                                  spec.num_quantiles - 1);
        buckets[b].push_back(order[rank]);
    }
    std::vector<std::size_t> feasible;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        std::set<std::string> tags;
        for (std::size_t i : buckets[b]) tags.insert(pool[i].tag);
        if (static_cast<int>(tags.size()) >= m_count) feasible.push_back(b);
    }
    if (feasible.empty())
        throw std::invalid_argument("assemble_from_pool: no quantile bucket holds " +
                                    std::to_string(m_count) +
                                    " distinct tags for heterogeneous mode");
    for (int d = 0; d < spec.num_draws; ++d) {
        const auto& bucket = buckets[feasible[rng.below(feasible.size())]];
        // Walk a shuffled bucket, taking the first entry of each new tag.
        std::vector<std::size_t> shuffled = bucket;
        rng.shuffle(shuffled);
        std::vector<std::size_t> chosen;
        std::set<std::string> used;
        for (std::size_t i : shuffled) {
            if (used.contains(pool[i].tag)) continue;
            chosen.push_back(i);
            used.insert(pool[i].tag);
            if (static_cast<int>(chosen.size()) == m_count) break;
        }
        ensembles.push_back(build(chosen));
    }
    return ensembles;
}

}  // namespace edl
