#include "edl/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "edl/datagen.hpp"
#include "edl/io.hpp"

namespace edl {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError("config error at " + path + ": " + message);
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) fail(path + "." + key, "missing required field");
    return j[key];
}

template <typename T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        fail(path, e.what());
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    return get_as<T>(j[key], path + "." + key);
}

DatasetSpec parse_dataset(const json& j, const std::string& path) {
    DatasetSpec spec;
    const std::string kind = get_as<std::string>(require(j, "type", path), path + ".type");
    if (kind == "csv") {
        spec.kind = DatasetSpec::Kind::Csv;
        spec.csv_path = get_as<std::string>(require(j, "path", path), path + ".path");
    } else if (kind == "gaussian_mixture") {
        spec.kind = DatasetSpec::Kind::GaussianMixture;
    } else if (kind == "two_spirals") {
        spec.kind = DatasetSpec::Kind::TwoSpirals;
    } else {
        fail(path + ".type", "expected csv | gaussian_mixture | two_spirals, got '" + kind + "'");
    }
    spec.num_points = get_or(j, "n", path, spec.num_points);
    spec.num_classes = get_or(j, "classes", path, spec.num_classes);
    spec.radius = get_or(j, "radius", path, spec.radius);
    spec.sigma = get_or(j, "sigma", path, spec.sigma);
    spec.noise = get_or(j, "noise", path, spec.noise);
    spec.seed = get_or(j, "seed", path, spec.seed);
    if (spec.kind != DatasetSpec::Kind::Csv) {
        if (spec.num_points < 1) fail(path + ".n", "must be >= 1");
        if (spec.num_classes < 2) fail(path + ".classes", "must be >= 2");
    }
    return spec;
}

ModelSpec parse_model(const json& j, const std::string& path) {
    ModelSpec spec;
    const std::string kind = get_or<std::string>(j, "type", path, "mlp");
    if (kind == "mlp") {
        spec.kind = ModelSpec::Kind::Mlp;
        spec.preset = get_or<std::string>(j, "preset", path, spec.preset);
        spec.hidden = get_or<std::vector<int>>(j, "hidden", path, {});
        for (int w : spec.hidden)
            if (w < 1) fail(path + ".hidden", "layer widths must be >= 1");
    } else if (kind == "rff") {
        spec.kind = ModelSpec::Kind::Rff;
        spec.rff_num_features = get_or(j, "num_features", path, spec.rff_num_features);
        spec.rff_seed = get_or(j, "seed", path, spec.rff_seed);
        if (spec.rff_num_features < 1) fail(path + ".num_features", "must be >= 1");
    } else {
        fail(path + ".type", "expected mlp | rff, got '" + kind + "'");
    }
    return spec;
}

OptimizerConfig parse_optimizer(const json& j, const std::string& path) {
    OptimizerConfig cfg;
    const std::string variant = get_or<std::string>(j, "variant", path, "adamw");
    if (variant == "adamw") cfg.variant = OptimizerConfig::Variant::AdamW;
    else if (variant == "sgd") cfg.variant = OptimizerConfig::Variant::Sgd;
    else fail(path + ".variant", "expected adamw | sgd, got '" + variant + "'");
    cfg.learning_rate = get_or(j, "learning_rate", path, cfg.learning_rate);
    cfg.weight_decay = get_or(j, "weight_decay", path, cfg.weight_decay);
    cfg.momentum = get_or(j, "momentum", path, cfg.momentum);
    cfg.beta1 = get_or(j, "beta1", path, cfg.beta1);
    cfg.beta2 = get_or(j, "beta2", path, cfg.beta2);
    cfg.adam_eps = get_or(j, "eps", path, cfg.adam_eps);
    const std::string schedule = get_or<std::string>(j, "schedule", path, "constant");
    if (schedule == "constant") cfg.schedule = OptimizerConfig::Schedule::Constant;
    else if (schedule == "step") cfg.schedule = OptimizerConfig::Schedule::Step;
    else if (schedule == "cosine") cfg.schedule = OptimizerConfig::Schedule::Cosine;
    else fail(path + ".schedule", "expected constant | step | cosine, got '" + schedule + "'");
    cfg.milestones = get_or<std::vector<int>>(j, "milestones", path, {});
    cfg.step_factor = get_or(j, "step_factor", path, cfg.step_factor);
    cfg.warmup_epochs = get_or(j, "warmup_epochs", path, cfg.warmup_epochs);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
    return cfg;
}

TrainRunConfig parse_train(const json& j, const std::string& path) {
    TrainRunConfig cfg;
    cfg.objective.loss = [&] {
        const std::string loss = get_or<std::string>(j, "loss", path, "cross_entropy");
        const double ls = get_or(j, "label_smoothing", path, 0.0);
        try {
            return parse_loss_kind(loss, ls);
        } catch (const std::invalid_argument& e) {
            fail(path + ".loss", e.what());
        }
    }();
    cfg.num_members = get_or(j, "num_members", path, cfg.num_members);
    cfg.epochs = get_or(j, "epochs", path, cfg.epochs);
    cfg.batch_size = get_or(j, "batch_size", path, cfg.batch_size);
    cfg.seed = get_or(j, "seed", path, cfg.seed);
    if (j.contains("early_stopping")) {
        const json& es = j["early_stopping"];
        cfg.early_stopping.enabled = get_or(es, "enabled", path + ".early_stopping", true);
        cfg.early_stopping.patience =
            get_or(es, "patience", path + ".early_stopping", cfg.early_stopping.patience);
    }
    if (j.contains("splits")) {
        const auto fractions =
            get_as<std::vector<double>>(j["splits"], path + ".splits");
        if (fractions.size() != 3) fail(path + ".splits", "expected [train, val, test]");
        cfg.splits = {fractions[0], fractions[1], fractions[2]};
    }
    if (j.contains("optimizer")) cfg.optimizer = parse_optimizer(j["optimizer"], path + ".optimizer");
    cfg.clip_gradients = get_or(j, "clip_gradients", path, cfg.clip_gradients);
    cfg.clip_norm = get_or(j, "clip_norm", path, cfg.clip_norm);
    try {
        cfg.splits.validate();
        cfg.optimizer.validate();
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
    if (cfg.num_members < 1) fail(path + ".num_members", "must be >= 1");
    if (cfg.epochs < 1) fail(path + ".epochs", "must be >= 1");
    if (cfg.batch_size < 1) fail(path + ".batch_size", "must be >= 1");
    return cfg;
}

}  // namespace

TabularDataset DatasetSpec::load(const std::filesystem::path& base_dir) const {
    switch (kind) {
        case Kind::Csv: {
            std::filesystem::path p = csv_path;
            if (p.is_relative()) p = base_dir / p;
            return read_dataset_csv(p);
        }
        case Kind::GaussianMixture:
            return gaussian_mixture(num_points, num_classes, radius, sigma, seed);
        case Kind::TwoSpirals:
            return two_spirals(num_points, noise, seed);
    }
    throw ConfigError("dataset: unknown kind");
}

std::vector<GridCell> ExperimentConfig::grid() const {
    std::vector<GridCell> cells;
    for (RegularizerKind reg : regularizers)
        for (double gamma : gammas) cells.push_back({reg, gamma});
    return cells;
}

void ExperimentConfig::validate() const {
    if (regularizers.empty()) throw ConfigError("config error at grid.regularizers: empty");
    if (gammas.empty()) throw ConfigError("config error at grid.gammas: empty");
    bool has_zero = false;
    for (double g : gammas) {
        if (!std::isfinite(g)) throw ConfigError("config error at grid.gammas: non-finite value");
        if (g == 0.0) has_zero = true;
    }
    if (!has_zero)
        throw ConfigError("config error at grid.gammas: must contain 0 (the sweep baseline)");
    if (seeds.empty()) throw ConfigError("config error at seeds: empty");
    if (output_dir.empty()) throw ConfigError("config error at output_dir: empty");
    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error at train: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config error: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config error: invalid JSON in " + path.string() + ": " + e.what());
    }
    for (const std::string& assignment : overrides) {
        const std::size_t eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config error: override must look like path.to.field=value, got '" +
                              assignment + "'");
        std::string pointer = "/" + assignment.substr(0, eq);
        for (char& c : pointer)
            if (c == '.') c = '/';
        json value;
        try {
            value = json::parse(assignment.substr(eq + 1));
        } catch (const json::exception&) {
            value = assignment.substr(eq + 1);  // bare strings need no quotes
        }
        try {
            j[json::json_pointer(pointer)] = std::move(value);
        } catch (const json::exception& e) {
            throw ConfigError("config error: cannot apply override '" + assignment +
                              "': " + e.what());
        }
    }
    ExperimentConfig config;
    config.dataset = parse_dataset(require(j, "dataset", "config"), "dataset");
    config.model = parse_model(get_or<json>(j, "model", "config", json::object()), "model");
    config.train = parse_train(get_or<json>(j, "train", "config", json::object()), "train");
    const json& grid = require(j, "grid", "config");
    for (const auto& name :
         get_as<std::vector<std::string>>(require(grid, "regularizers", "grid"), "grid.regularizers")) {
        try {
            config.regularizers.push_back(parse_regularizer(name));
        } catch (const std::invalid_argument& e) {
            fail("grid.regularizers", e.what());
        }
    }
    config.gammas = get_as<std::vector<double>>(require(grid, "gammas", "grid"), "grid.gammas");
    config.output_dir = get_as<std::string>(require(j, "output_dir", "config"), "output_dir");

    bool explicit_seeds = j.contains("seeds");
    if (explicit_seeds)
        config.seeds = get_as<std::vector<std::uint64_t>>(j["seeds"], "seeds");

    if (const char* env_seed = std::getenv("EDL_SEED"); env_seed != nullptr && *env_seed != '\0') {
        try {
            config.train.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError("config error: EDL_SEED is not an unsigned integer: " +
                              std::string(env_seed));
        }
        if (!explicit_seeds) config.seeds = {config.train.seed};
    }
    if (config.seeds.empty()) config.seeds = {config.train.seed};

    config.validate();
    return config;
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
    json j;
    switch (config.dataset.kind) {
        case DatasetSpec::Kind::Csv:
            j["dataset"] = {{"type", "csv"}, {"path", config.dataset.csv_path}};
            break;
        case DatasetSpec::Kind::GaussianMixture:
            j["dataset"] = {{"type", "gaussian_mixture"},
                            {"n", config.dataset.num_points},
                            {"classes", config.dataset.num_classes},
                            {"radius", config.dataset.radius},
                            {"sigma", config.dataset.sigma},
                            {"seed", config.dataset.seed}};
            break;
        case DatasetSpec::Kind::TwoSpirals:
            j["dataset"] = {{"type", "two_spirals"},
                            {"n", config.dataset.num_points},
                            {"noise", config.dataset.noise},
                            {"seed", config.dataset.seed}};
            break;
    }
    if (config.model.kind == ModelSpec::Kind::Mlp) {
        j["model"] = {{"type", "mlp"}, {"preset", config.model.preset}};
        if (!config.model.hidden.empty()) j["model"]["hidden"] = config.model.hidden;
    } else {
        j["model"] = {{"type", "rff"},
                      {"num_features", config.model.rff_num_features},
                      {"seed", config.model.rff_seed}};
    }
    j["train"] = {{"loss", config.train.objective.loss.name()},
                  {"label_smoothing", config.train.objective.loss.label_smoothing},
                  {"num_members", config.train.num_members},
                  {"epochs", config.train.epochs},
                  {"batch_size", config.train.batch_size},
                  {"seed", config.train.seed},
                  {"splits", {config.train.splits.train, config.train.splits.val,
                              config.train.splits.test}},
                  {"early_stopping", {{"enabled", config.train.early_stopping.enabled},
                                      {"patience", config.train.early_stopping.patience}}}};
    std::vector<std::string> reg_names;
    for (RegularizerKind reg : config.regularizers) reg_names.push_back(regularizer_name(reg));
    j["grid"] = {{"regularizers", reg_names}, {"gammas", config.gammas}};
    j["seeds"] = config.seeds;
    j["output_dir"] = config.output_dir.string();
    return j.dump(2) + "\n";
}

std::string run_dir_name(RegularizerKind regularizer, double gamma, std::uint64_t seed) {
    std::ostringstream name;
    name << regularizer_name(regularizer) << "_g" << gamma << "_s" << seed;
    return name.str();
}

}  // namespace edl
