#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edl/training.hpp"

namespace edl {

/// Thrown on schema violations; the message names the offending field path.
/// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

struct DatasetSpec {
    enum class Kind { Csv, GaussianMixture, TwoSpirals };
    Kind kind = Kind::GaussianMixture;
    std::string csv_path;
    int num_points = 2000;
    int num_classes = 3;
    double radius = 2.0;
    double sigma = 1.0;
    double noise = 0.1;
    std::uint64_t seed = 0;

    TabularDataset load(const std::filesystem::path& base_dir) const;
};

struct ModelSpec {
    enum class Kind { Mlp, Rff };
    Kind kind = Kind::Mlp;
    std::string preset = "smaller";   // Mlp with empty hidden override
    std::vector<int> hidden;          // explicit layer widths (overrides preset)
    int rff_num_features = 256;
    std::uint64_t rff_seed = 0;
};

struct GridCell {
    RegularizerKind regularizer;
    double gamma = 0.0;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    ModelSpec model;
    TrainRunConfig train;
    std::vector<RegularizerKind> regularizers;
    std::vector<double> gammas;  // must contain 0 (sweep baseline)
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;

    std::vector<GridCell> grid() const;
    void validate() const;
};

/// Parses and fully validates the JSON config before any work starts.
/// Overrides are dotted-path assignments applied before validation, e.g.
/// "train.epochs=5" or "grid.gammas=[-0.5,0,0.5]"; values parse as JSON.
/// The EDL_SEED environment variable, when set, overrides train.seed (and
/// the derived seed list when "seeds" is not given explicitly).
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

std::string experiment_config_to_json(const ExperimentConfig& config);

/// Directory name for one grid cell run: <regularizer>_g<gamma>_s<seed>.
std::string run_dir_name(RegularizerKind regularizer, double gamma, std::uint64_t seed);

}  // namespace edl
