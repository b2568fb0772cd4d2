#pragma once

#include <string>
#include <vector>

#include "edl/rng.hpp"
#include "edl/simplex.hpp"

namespace edl {

/// Controlled diversity injected into a perfect prediction, swept by a
/// damage parameter s in [0, 1] (s = 0 leaves the prediction intact).
///   Geometric  — member i is (1-s) * e_y + s * e_{(y+i) mod C}; deterministic
///   LogitNoise — softmax(logit_scale * e_y + eps), eps ~ N(0, s I) per member
///   Dirichlet  — i.i.d. Dir(concentration_scale * alpha(s)) with
///                alpha(s) = [1-s at the correct class, s/(C-1) elsewhere];
///                zero components are clamped to 1e-8
struct DiversityMechanism {
    enum class Kind { Geometric, LogitNoise, Dirichlet };

    Kind kind = Kind::Geometric;
    double logit_scale = 10.0;
    double concentration_scale = 0.1;

    std::string name() const;
    static DiversityMechanism parse(const std::string& name);
};

struct DiversitySweepSpec {
    DiversityMechanism mechanism;
    std::vector<double> s_grid;
    int num_members = 3;
    int num_classes = 3;
    int correct_class = 0;
    int num_samples = 100;  // stochastic mechanisms only
    PaddingPolicy padding{1e-10};

    void validate() const;
};

/// One simulated datapoint: M padded member predictions (M x C row-major).
std::vector<double> generate_point(const DiversityMechanism& mechanism, double s,
                                   const DiversitySweepSpec& spec, SeededRng& rng);

struct SweepRow {
    double s = 0.0;
    double jensen_gap = 0.0;
    double avg_member_nll = 0.0;
    double ensemble_nll = 0.0;
    int samples = 0;
};

/// Means of (CE Jensen gap, average member NLL, ensemble NLL) per s value,
/// rows ordered by s. Each s cell draws from an independent child stream of
/// the given rng, indexed by grid position. When ensemble_nll_samples is
/// non-null it receives the per-sample ensemble NLL values per row.
std::vector<SweepRow> run_sweep(const DiversitySweepSpec& spec, SeededRng& rng,
                                std::vector<std::vector<double>>* ensemble_nll_samples = nullptr);

/// Sweep CSV: mechanism,s,jensen_gap,avg_member_nll,ensemble_nll,samples,seed.
std::string sweep_to_csv(const DiversityMechanism& mechanism, const std::vector<SweepRow>& rows,
                         std::uint64_t seed);

}  // namespace edl
