#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "edl/losses.hpp"
#include "edl/simplex.hpp"

namespace edl {

struct DumpMeta;       // training.hpp
struct EnsembleModel;  // training.hpp
struct EpochStats;     // training.hpp

/// Writes content to a temp file in the target directory and renames it into
/// place, so readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

/// Dataset CSV: header "f0,...,f{F-1},label"; one row per point.
void write_dataset_csv(const TabularDataset& data, const std::filesystem::path& path);
/// num_classes is inferred as max(label) + 1 unless a larger value is given.
TabularDataset read_dataset_csv(const std::filesystem::path& path, int num_classes = 0);

/// Prediction dump CSV: header "member,point,class,prob" with probabilities
/// printed at full round-trip precision; sidecar JSON at <path>.json records
/// {M, N, C, seed, tag} plus optional gamma/regularizer/labels.
void write_prediction_dump(const PredictionSet& preds, const DumpMeta& meta,
                           const std::filesystem::path& csv_path);

struct PredictionDump {
    PredictionSet preds;
    double gamma = 0.0;
    bool has_gamma = false;
    std::string regularizer;
    std::string tag;
    std::uint64_t seed = 0;
};

PredictionDump read_prediction_dump(const std::filesystem::path& csv_path);

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

/// DecompositionReport JSON {ensemble_risk, avg_member_risk, jensen_gap} and
/// the optional per-point CSV "point,avg_loss,ens_loss,gap".
std::string decomposition_to_json(const DecompositionReport& report);
void write_decomposition_csv(const DecompositionReport& report, const std::filesystem::path& path);

/// Versioned JSON checkpoint (architecture, seed, feature map, member
/// parameters); 64-bit values survive a save/load round trip bit-exactly.
void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel load_checkpoint(const std::filesystem::path& path);

/// Full-precision decimal formatting that parses back to the same double.
std::string format_double(double v);

}  // namespace edl
