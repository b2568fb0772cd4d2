#include "edl/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edl/io.hpp"
#include "edl/losses.hpp"

namespace edl {

std::string DiversityMechanism::name() const {
    switch (kind) {
        case Kind::Geometric: return "geometric";
        case Kind::LogitNoise: return "logit_noise";
        case Kind::Dirichlet: return "dirichlet";
    }
    return "?";
}

DiversityMechanism DiversityMechanism::parse(const std::string& name) {
    DiversityMechanism m;
    if (name == "geometric") m.kind = Kind::Geometric;
    else if (name == "logit_noise") m.kind = Kind::LogitNoise;
    else if (name == "dirichlet") m.kind = Kind::Dirichlet;
    else
        throw std::invalid_argument("unknown mechanism: " + name +
                                    " (expected geometric | logit_noise | dirichlet)");
    return m;
}

void DiversitySweepSpec::validate() const {
    if (num_members < 1) throw std::invalid_argument("DiversitySweepSpec: num_members must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("DiversitySweepSpec: num_classes must be >= 2");
    if (correct_class < 0 || correct_class >= num_classes)
        throw std::invalid_argument("DiversitySweepSpec: correct_class out of range");
    if (num_samples < 1) throw std::invalid_argument("DiversitySweepSpec: num_samples must be >= 1");
    if (s_grid.empty()) throw std::invalid_argument("DiversitySweepSpec: empty s grid");
    for (double s : s_grid)
        if (!(s >= 0.0 && s <= 1.0))
            throw std::invalid_argument("DiversitySweepSpec: s values must lie in [0, 1]");
    if (!(mechanism.logit_scale > 0.0) || !(mechanism.concentration_scale > 0.0))
        throw std::invalid_argument("DiversitySweepSpec: mechanism scales must be positive");
    padding.validate(num_classes);
}

std::vector<double> generate_point(const DiversityMechanism& mechanism, double s,
                                   const DiversitySweepSpec& spec, SeededRng& rng) {
    const int m_count = spec.num_members;
    const int c_count = spec.num_classes;
    const int y = spec.correct_class;
    std::vector<double> out(static_cast<std::size_t>(m_count) * c_count, 0.0);
    switch (mechanism.kind) {
        case DiversityMechanism::Kind::Geometric: {
            if (m_count > c_count)
                throw std::invalid_argument("generate_point: geometric mechanism requires M <= C");
            for (int m = 0; m < m_count; ++m) {
                double* row = out.data() + static_cast<std::size_t>(m) * c_count;
                row[y] += 1.0 - s;
                row[(y + m) % c_count] += s;
            }
            break;
        }
        case DiversityMechanism::Kind::LogitNoise: {
            const double noise_scale = std::sqrt(s);
            std::vector<double> logits(c_count);
            for (int m = 0; m < m_count; ++m) {
                for (int c = 0; c < c_count; ++c)
                    logits[c] = (c == y ? mechanism.logit_scale : 0.0) +
                                noise_scale * rng.normal();
                softmax_into(logits,
                             std::span<double>(out.data() + static_cast<std::size_t>(m) * c_count,
                                               c_count));
            }
            break;
        }
        case DiversityMechanism::Kind::Dirichlet: {
            std::vector<double> alpha(c_count);
            const double tail = s / (c_count - 1);
            for (int c = 0; c < c_count; ++c)
                alpha[c] = mechanism.concentration_scale * (c == y ? 1.0 - s : tail);
            for (double& a : alpha) a = std::max(a, 1e-8);
            for (int m = 0; m < m_count; ++m) {
                const std::vector<double> draw = rng.dirichlet(alpha);
                std::copy(draw.begin(), draw.end(),
                          out.begin() + static_cast<std::size_t>(m) * c_count);
            }
            break;
        }
    }
    for (int m = 0; m < m_count; ++m)
        pad_row(std::span<double>(out.data() + static_cast<std::size_t>(m) * c_count, c_count),
                spec.padding.epsilon);
    return out;
}

std::vector<SweepRow> run_sweep(const DiversitySweepSpec& spec, SeededRng& rng,
                                std::vector<std::vector<double>>* ensemble_nll_samples) {
    spec.validate();
    std::vector<double> grid = spec.s_grid;
    std::sort(grid.begin(), grid.end());
    const int m_count = spec.num_members;
    const int c_count = spec.num_classes;
    const int y = spec.correct_class;
    const bool deterministic = spec.mechanism.kind == DiversityMechanism::Kind::Geometric;
    const int samples = deterministic ? 1 : spec.num_samples;

    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    if (ensemble_nll_samples != nullptr) ensemble_nll_samples->clear();
    std::vector<double> ens(c_count);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        SeededRng cell_rng = rng.child(j);
        std::vector<double> gaps(samples), avgs(samples), enss(samples);
        for (int it = 0; it < samples; ++it) {
            const std::vector<double> point =
                generate_point(spec.mechanism, grid[j], spec, cell_rng);
            double avg = 0.0;
            std::fill(ens.begin(), ens.end(), 0.0);
            for (int m = 0; m < m_count; ++m) {
                const double* row = point.data() + static_cast<std::size_t>(m) * c_count;
                avg -= std::log(row[y]);
                for (int c = 0; c < c_count; ++c) ens[c] += row[c];
            }
            avg /= m_count;
            for (double& v : ens) v /= m_count;
            const double ens_nll = -std::log(ens[y]);
            gaps[it] = avg - ens_nll;
            avgs[it] = avg;
            enss[it] = ens_nll;
        }
        SweepRow row;
        row.s = grid[j];
        row.jensen_gap = pairwise_mean(gaps);
        row.avg_member_nll = pairwise_mean(avgs);
        row.ensemble_nll = pairwise_mean(enss);
        row.samples = samples;
        rows.push_back(row);
        if (ensemble_nll_samples != nullptr) ensemble_nll_samples->push_back(std::move(enss));
    }
    return rows;
}

std::string sweep_to_csv(const DiversityMechanism& mechanism, const std::vector<SweepRow>& rows,
                         std::uint64_t seed) {
    std::string out = "mechanism,s,jensen_gap,avg_member_nll,ensemble_nll,samples,seed\n";
    for (const SweepRow& row : rows) {
        out += mechanism.name();
        out += ',';
        out += format_double(row.s);
        out += ',';
        out += format_double(row.jensen_gap);
        out += ',';
        out += format_double(row.avg_member_nll);
        out += ',';
        out += format_double(row.ensemble_nll);
        out += ',';
        out += std::to_string(row.samples);
        out += ',';
        out += std::to_string(seed);
        out += '\n';
    }
    return out;
}

}  // namespace edl
