#include "edl/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edl/training.hpp"

namespace edl {

using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return {buf, static_cast<std::size_t>(len)};
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("atomic_write_file: cannot open " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("atomic_write_file: write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    return fields;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": cannot parse number '" + s + "'");
    }
}

long parse_long(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": cannot parse integer '" + s + "'");
    }
}

}  // namespace

void write_dataset_csv(const TabularDataset& data, const std::filesystem::path& path) {
    data.validate();
    std::string out;
    for (int f = 0; f < data.num_features(); ++f) {
        out += "f" + std::to_string(f);
        out += ',';
    }
    out += "label\n";
    for (int n = 0; n < data.num_points(); ++n) {
        for (int f = 0; f < data.num_features(); ++f) {
            out += format_double(data.features.at(n, f));
            out += ',';
        }
        out += std::to_string(data.labels[n]);
        out += '\n';
    }
    atomic_write_file(path, out);
}

TabularDataset read_dataset_csv(const std::filesystem::path& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path.string());
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "label")
        throw std::runtime_error("read_dataset_csv: expected header f0,...,label in " + path.string());
    const int num_features = static_cast<int>(header.size()) - 1;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != num_features + 1)
            throw std::runtime_error("read_dataset_csv: row " + std::to_string(rows + 1) +
                                     " has " + std::to_string(fields.size()) + " fields");
        for (int f = 0; f < num_features; ++f)
            values.push_back(parse_double(fields[f], path.string()));
        labels.push_back(static_cast<int>(parse_long(fields.back(), path.string())));
        ++rows;
    }
    TabularDataset data;
    data.features = Matrix(rows, num_features);
    data.features.data() = std::move(values);
    data.labels = std::move(labels);
    int max_label = 0;
    for (int l : data.labels) max_label = std::max(max_label, l);
    data.num_classes = std::max(num_classes, max_label + 1);
    data.num_classes = std::max(data.num_classes, 2);
    data.validate();
    return data;
}

void write_prediction_dump(const PredictionSet& preds, const DumpMeta& meta,
                           const std::filesystem::path& csv_path) {
    std::string out = "member,point,class,prob\n";
    for (int m = 0; m < preds.num_members(); ++m)
        for (int n = 0; n < preds.num_points(); ++n)
            for (int c = 0; c < preds.num_classes(); ++c) {
                out += std::to_string(m);
                out += ',';
                out += std::to_string(n);
                out += ',';
                out += std::to_string(c);
                out += ',';
                out += format_double(preds.at(m, n, c));
                out += '\n';
            }
    atomic_write_file(csv_path, out);

    json side;
    side["M"] = meta.num_members;
    side["N"] = meta.num_points;
    side["C"] = meta.num_classes;
    side["seed"] = meta.seed;
    side["tag"] = meta.tag;
    if (meta.gamma) side["gamma"] = *meta.gamma;
    if (meta.regularizer) side["regularizer"] = *meta.regularizer;
    if (meta.labels) side["labels"] = *meta.labels;
    std::filesystem::path side_path = csv_path;
    side_path += ".json";
    atomic_write_file(side_path, side.dump(2) + "\n");
}

PredictionDump read_prediction_dump(const std::filesystem::path& csv_path) {
    std::filesystem::path side_path = csv_path;
    side_path += ".json";
    std::ifstream side_in(side_path);
    if (!side_in)
        throw std::runtime_error("read_prediction_dump: missing sidecar " + side_path.string());
    json side = json::parse(side_in);
    const int m_count = side.at("M").get<int>();
    const int n_count = side.at("N").get<int>();
    const int c_count = side.at("C").get<int>();

    PredictionDump dump;
    dump.preds = PredictionSet(m_count, n_count, c_count);
    dump.seed = side.at("seed").get<std::uint64_t>();
    dump.tag = side.at("tag").get<std::string>();
    if (side.contains("gamma")) {
        dump.gamma = side["gamma"].get<double>();
        dump.has_gamma = true;
    }
    if (side.contains("regularizer")) dump.regularizer = side["regularizer"].get<std::string>();

    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("read_prediction_dump: cannot open " + csv_path.string());
    std::string line;
    std::getline(in, line);
    if (line != "member,point,class,prob")
        throw std::runtime_error("read_prediction_dump: unexpected header in " + csv_path.string());
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw std::runtime_error("read_prediction_dump: malformed row in " + csv_path.string());
        const int m = static_cast<int>(parse_long(fields[0], csv_path.string()));
        const int n = static_cast<int>(parse_long(fields[1], csv_path.string()));
        const int c = static_cast<int>(parse_long(fields[2], csv_path.string()));
        if (m < 0 || m >= m_count || n < 0 || n >= n_count || c < 0 || c >= c_count)
            throw std::runtime_error("read_prediction_dump: index out of range in " +
                                     csv_path.string());
        dump.preds.at(m, n, c) = parse_double(fields[3], csv_path.string());
        ++rows;
    }
    if (rows != static_cast<std::size_t>(m_count) * n_count * c_count)
        throw std::runtime_error("read_prediction_dump: expected " +
                                 std::to_string(static_cast<std::size_t>(m_count) * n_count *
                                                c_count) +
                                 " rows, got " + std::to_string(rows));
    if (side.contains("labels")) dump.preds.set_labels(side["labels"].get<std::vector<int>>());
    dump.preds.validate();
    return dump;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
    std::string out = "epoch,objective,avg_loss,diversity,val_metric\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        out += std::to_string(e);
        out += ',';
        out += format_double(history[e].objective);
        out += ',';
        out += format_double(history[e].avg_loss);
        out += ',';
        out += format_double(history[e].diversity);
        out += ',';
        out += format_double(history[e].val_metric);
        out += '\n';
    }
    atomic_write_file(path, out);
}

std::string decomposition_to_json(const DecompositionReport& report) {
    json j;
    j["ensemble_risk"] = report.ensemble_risk;
    j["avg_member_risk"] = report.avg_member_risk;
    j["jensen_gap"] = report.jensen_gap;
    return j.dump(2) + "\n";
}

void write_decomposition_csv(const DecompositionReport& report,
                             const std::filesystem::path& path) {
    std::string out = "point,avg_loss,ens_loss,gap\n";
    for (std::size_t n = 0; n < report.per_point.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        out += format_double(report.per_point[n].avg_loss);
        out += ',';
        out += format_double(report.per_point[n].ens_loss);
        out += ',';
        out += format_double(report.per_point[n].gap);
        out += '\n';
    }
    atomic_write_file(path, out);
}

void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path) {
    json j;
    j["version"] = 1;
    j["seed"] = model.seed;
    j["arch"] = {{"input_dim", model.arch.input_dim},
                 {"hidden", model.arch.hidden_layers},
                 {"num_classes", model.arch.num_classes}};
    if (model.feature_map) {
        j["feature_map"] = {{"num_features", model.feature_map->num_features()},
                            {"input_dim", model.feature_map->input_dim()},
                            {"projection", model.feature_map->projection.data()},
                            {"phase", model.feature_map->phase}};
    }
    json members = json::array();
    for (const auto& params : model.members) members.push_back(params.flatten());
    j["members"] = std::move(members);
    atomic_write_file(path, j.dump() + "\n");
}

EnsembleModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    json j = json::parse(in);
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path.string());
    EnsembleModel model;
    model.seed = j.at("seed").get<std::uint64_t>();
    model.arch.input_dim = j.at("arch").at("input_dim").get<int>();
    model.arch.hidden_layers = j.at("arch").at("hidden").get<std::vector<int>>();
    model.arch.num_classes = j.at("arch").at("num_classes").get<int>();
    model.arch.validate();
    if (j.contains("feature_map")) {
        const auto& fm = j["feature_map"];
        RffFeatureMap map;
        map.projection = Matrix(fm.at("num_features").get<int>(), fm.at("input_dim").get<int>());
        map.projection.data() = fm.at("projection").get<std::vector<double>>();
        map.phase = fm.at("phase").get<std::vector<double>>();
        if (map.projection.data().size() !=
                static_cast<std::size_t>(map.num_features()) * map.input_dim() ||
            map.phase.size() != static_cast<std::size_t>(map.num_features()))
            throw std::runtime_error("load_checkpoint: feature map shape mismatch");
        model.feature_map = std::move(map);
    }
    for (const auto& flat : j.at("members")) {
        const auto values = flat.get<std::vector<double>>();
        model.members.push_back(MlpParameters::unflatten(model.arch, values));
    }
    if (model.members.empty()) throw std::runtime_error("load_checkpoint: no members in " + path.string());
    return model;
}

}  // namespace edl
