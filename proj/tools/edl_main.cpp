#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "edl/analysis.hpp"
#include "edl/config.hpp"
#include "edl/datagen.hpp"
#include "edl/io.hpp"
#include "edl/simlab.hpp"
#include "edl/training.hpp"

namespace fs = std::filesystem;
using namespace edl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct RunOutputs {
    fs::path dir;
    PredictionDump test_dump;
};

MlpArchitecture resolve_arch(const ModelSpec& model, int feature_dim, int num_classes) {
    if (model.kind == ModelSpec::Kind::Rff)
        return MlpArchitecture{model.rff_num_features, {}, num_classes};
    if (!model.hidden.empty()) {
        MlpArchitecture arch{feature_dim, model.hidden, num_classes};
        arch.validate();
        return arch;
    }
    return MlpArchitecture::preset(model.preset, feature_dim, num_classes);
}

std::string model_tag(const ModelSpec& model) {
    if (model.kind == ModelSpec::Kind::Rff)
        return "rff" + std::to_string(model.rff_num_features);
    if (!model.hidden.empty()) {
        std::string tag = "mlp";
        for (int w : model.hidden) tag += "_" + std::to_string(w);
        return tag;
    }
    return "mlp_" + model.preset;
}

int run_cell(const ExperimentConfig& config, const TabularDataset& data, const DataSplits& splits,
             const GridCell& cell, std::uint64_t seed, bool force, std::mutex& log_mutex) {
    const fs::path run_dir =
        config.output_dir / run_dir_name(cell.regularizer, cell.gamma, seed);
    if (fs::exists(run_dir) && !force) {
        std::lock_guard lock(log_mutex);
        std::cerr << "error: run directory exists (use --force to overwrite): " << run_dir
                  << "\n";
        return 1;
    }
    fs::create_directories(run_dir);

    TrainRunConfig train = config.train;
    train.objective.regularizer = cell.regularizer;
    train.objective.gamma = cell.gamma;
    train.seed = seed;
    for (const std::string& warning : train.objective.warnings()) {
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: " << warning << "\n";
    }

    std::optional<RffFeatureMap> feature_map;
    if (config.model.kind == ModelSpec::Kind::Rff) {
        SeededRng map_rng(SeededRng::mix(config.model.rff_seed ^ SeededRng::mix(seed)));
        feature_map = RffFeatureMap::make(config.model.rff_num_features, data.num_features(),
                                          map_rng);
    }
    const MlpArchitecture arch =
        resolve_arch(config.model, data.num_features(), data.num_classes);

    const TrainedEnsemble trained = train_joint(arch, feature_map, splits, train);
    if (trained.diverged) {
        std::lock_guard lock(log_mutex);
        std::cerr << "error: training diverged in " << run_dir << "\n";
        return 1;
    }

    atomic_write_file(run_dir / "config.json", experiment_config_to_json(config));
    write_history_csv(trained.history, run_dir / "history.csv");
    save_checkpoint(trained.model, run_dir / "checkpoint.json");
    const std::string tag = model_tag(config.model);
    const auto dump_split = [&](const TabularDataset& split, const char* name) {
        if (split.num_points() == 0) return;
        dump_predictions(trained.model, split, run_dir / (std::string("preds_") + name + ".csv"),
                         tag, cell.gamma, regularizer_name(cell.regularizer));
    };
    dump_split(splits.train, "train");
    dump_split(splits.val, "val");
    dump_split(splits.test, "test");
    {
        std::lock_guard lock(log_mutex);
        std::cout << run_dir.string() << ": done (" << trained.history.size() << " epochs, best "
                  << trained.best_epoch << ")\n";
    }
    return 0;
}

int cmd_train(const std::string& config_path, bool force, int jobs,
              const std::vector<std::string>& overrides) {
    const ExperimentConfig config = load_experiment_config(config_path, overrides);
    const TabularDataset data = config.dataset.load(fs::path(config_path).parent_path());
    SeededRng split_rng = SeededRng(config.dataset.seed).child(1);
    const DataSplits splits = split_dataset(data, config.train.splits, split_rng);

    struct Cell {
        GridCell grid;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const GridCell& cell : config.grid())
        for (std::uint64_t seed : config.seeds) cells.push_back({cell, seed});

    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                failures += run_cell(config, data, splits, cells[i].grid, cells[i].seed, force,
                                     log_mutex);
            } catch (const std::exception& e) {
                std::lock_guard lock(log_mutex);
                std::cerr << "error: cell " << i << " failed: " << e.what() << "\n";
                ++failures;
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failures > 0) {
        std::cerr << failures << " of " << cells.size() << " grid cells failed\n";
        return kExitRuntime;
    }
    std::cout << "completed " << cells.size() << " runs under " << config.output_dir << "\n";
    return kExitOk;
}

struct LoadedRun {
    fs::path dir;
    PredictionDump dump;  // test split predictions
};

std::vector<LoadedRun> load_runs(const std::string& runs_arg) {
    std::vector<LoadedRun> runs;
    const fs::path root(runs_arg);
    if (!fs::exists(root)) throw std::runtime_error("analyze: no such path: " + runs_arg);
    std::vector<fs::path> candidates;
    if (fs::exists(root / "preds_test.csv")) candidates.push_back(root);
    else
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && fs::exists(entry.path() / "preds_test.csv"))
                candidates.push_back(entry.path());
    std::sort(candidates.begin(), candidates.end());
    for (const fs::path& dir : candidates)
        runs.push_back({dir, read_prediction_dump(dir / "preds_test.csv")});
    if (runs.empty()) throw std::runtime_error("analyze: no runs with preds_test.csv under " +
                                               runs_arg);
    const auto& first = runs.front().dump.preds;
    for (const auto& run : runs) {
        const auto& preds = run.dump.preds;
        if (preds.num_points() != first.num_points() ||
            preds.num_classes() != first.num_classes() || preds.labels() != first.labels())
            throw std::runtime_error("analyze: mismatched datasets across runs (" +
                                     run.dir.string() + ")");
    }
    return runs;
}

int cmd_analyze(const std::string& runs_arg, const std::string& kind, const std::string& out_dir,
                const std::string& metric, int ensemble_size, const std::string& pool_mode,
                int draws, std::uint64_t seed) {
    const std::vector<LoadedRun> runs = load_runs(runs_arg);
    fs::create_directories(out_dir);

    if (kind == "summary") {
        std::vector<RunMetricsEntry> entries;
        for (const auto& run : runs) {
            if (!run.dump.has_gamma)
                throw std::runtime_error("analyze: dump without gamma metadata: " +
                                         run.dir.string());
            entries.push_back({run.dump.regularizer, run.dump.gamma, run.dump.seed,
                               metrics(run.dump.preds)});
        }
        std::vector<SweepSummary> summaries;
        const std::vector<std::string> metric_names =
            metric.empty() ? std::vector<std::string>{"accuracy", "nll", "brier", "ece"}
                           : std::vector<std::string>{metric};
        for (const std::string& name : metric_names)
            summaries.push_back(sweep_summary(entries, name));
        atomic_write_file(fs::path(out_dir) / "summary.json", summary_to_json(summaries));
        std::string csv = "metric,regularizer,gamma,num_runs,mean,sem,verdict\n";
        for (const auto& summary : summaries)
            for (const auto& cell : summary.cells) {
                csv += summary.metric + "," + cell.regularizer + "," +
                       format_double(cell.gamma) + "," + std::to_string(cell.num_runs) + "," +
                       format_double(cell.mean) + "," + format_double(cell.sem) + "," +
                       verdict_name(cell.verdict) + "\n";
            }
        atomic_write_file(fs::path(out_dir) / "summary.csv", csv);
        std::cout << "wrote " << out_dir << "/summary.json\n";
        return kExitOk;
    }

    if (kind == "decompose") {
        std::vector<RunPredictions> preds;
        for (const auto& run : runs)
            preds.push_back({run.dump.regularizer, run.dump.gamma, run.dump.seed,
                             &run.dump.preds});
        const auto rows = decomposition_scatter(preds);
        atomic_write_file(fs::path(out_dir) / "decomposition.csv", scatter_to_csv(rows));
        std::cout << "wrote " << out_dir << "/decomposition.csv\n";
        return kExitOk;
    }

    if (kind == "counterfactual") {
        // Group by regularizer; one representative run (lowest seed) per gamma.
        std::set<std::string> reg_names;
        for (const auto& run : runs) reg_names.insert(run.dump.regularizer);
        for (const std::string& reg : reg_names) {
            std::map<double, const LoadedRun*> by_gamma;
            for (const auto& run : runs) {
                if (run.dump.regularizer != reg && run.dump.gamma != 0.0) continue;
                auto it = by_gamma.find(run.dump.gamma);
                if (it == by_gamma.end() || run.dump.seed < it->second->dump.seed)
                    by_gamma[run.dump.gamma] = &run;
            }
            if (!by_gamma.contains(0.0))
                throw std::runtime_error("analyze: counterfactual needs a gamma = 0 baseline for "
                                         "regularizer " + reg);
            std::map<double, const PredictionSet*> intervened;
            for (const auto& [gamma, run] : by_gamma) intervened[gamma] = &run->dump.preds;
            const CounterfactualReport report =
                counterfactual_analysis(by_gamma.at(0.0)->dump.preds, intervened);
            atomic_write_file(fs::path(out_dir) / ("counterfactual_" + reg + ".csv"),
                              counterfactual_to_csv(report));
        }
        std::cout << "wrote counterfactual CSVs under " << out_dir << "\n";
        return kExitOk;
    }

    if (kind == "pool") {
        std::vector<PoolEntry> pool;
        for (const auto& run : runs) {
            const PredictionSet& preds = run.dump.preds;
            for (int m = 0; m < preds.num_members(); ++m) {
                PoolEntry entry;
                entry.tag = run.dump.tag;
                entry.probs = Matrix(preds.num_points(), preds.num_classes());
                for (int n = 0; n < preds.num_points(); ++n)
                    std::copy(preds.row(m, n).begin(), preds.row(m, n).end(),
                              entry.probs.row(n).begin());
                pool.push_back(std::move(entry));
            }
        }
        PoolSpec spec;
        spec.ensemble_size = ensemble_size;
        spec.num_draws = draws;
        spec.mode = pool_mode == "heterogeneous" ? PoolSpec::Mode::Heterogeneous
                                                 : PoolSpec::Mode::Homogeneous;
        SeededRng rng(seed);
        const auto ensembles =
            assemble_from_pool(pool, runs.front().dump.preds.labels(), spec, rng);
        std::string csv = "draw,mode,jensen_gap,avg_member_risk,ensemble_risk,accuracy,nll\n";
        for (std::size_t d = 0; d < ensembles.size(); ++d) {
            const auto report = decompose(LossKind::cross_entropy(),
                                          pad_and_renormalize(ensembles[d], PaddingPolicy{}));
            const auto m = metrics(ensembles[d]);
            csv += std::to_string(d) + "," + pool_mode + "," + format_double(report.jensen_gap) +
                   "," + format_double(report.avg_member_risk) + "," +
                   format_double(report.ensemble_risk) + "," + format_double(m.accuracy) + "," +
                   format_double(m.nll) + "\n";
        }
        atomic_write_file(fs::path(out_dir) / "pool.csv", csv);
        std::cout << "wrote " << out_dir << "/pool.csv\n";
        return kExitOk;
    }

    throw std::runtime_error("analyze: unknown kind '" + kind +
                             "' (expected summary | counterfactual | decompose | pool)");
}

int cmd_simulate(const std::string& mechanism_name, const std::string& s_grid_arg, int s_count,
                 int samples, int members, int classes, std::uint64_t seed,
                 const std::string& out_path, bool force) {
    DiversityMechanism mechanism = DiversityMechanism::parse(mechanism_name);
    DiversitySweepSpec spec;
    spec.mechanism = mechanism;
    spec.num_members = members;
    spec.num_classes = classes;
    spec.num_samples = samples;
    if (!s_grid_arg.empty()) {
        std::istringstream in(s_grid_arg);
        std::string tok;
        while (std::getline(in, tok, ',')) spec.s_grid.push_back(std::stod(tok));
    } else {
        for (int i = 0; i < s_count; ++i)
            spec.s_grid.push_back(static_cast<double>(i) / (s_count - 1));
    }
    if (mechanism.kind == DiversityMechanism::Kind::Dirichlet) {
        for (double s : spec.s_grid)
            if (s == 0.0 || s == 1.0) {
                std::cerr << "warning: dirichlet concentration has a zero component at s = " << s
                          << "; clamped to 1e-8\n";
                break;
            }
    }
    if (mechanism.kind == DiversityMechanism::Kind::Geometric && members < 3)
        std::cerr << "warning: geometric mechanism with fewer than 3 members exercises only part "
                     "of the simplex\n";
    if (const char* env_seed = std::getenv("EDL_SEED"); env_seed != nullptr && *env_seed != '\0')
        seed = std::stoull(env_seed);
    if (fs::exists(out_path) && !force)
        throw std::runtime_error("simulate: output exists (use --force): " + out_path);
    SeededRng rng(seed);
    const auto rows = run_sweep(spec, rng);
    atomic_write_file(out_path, sweep_to_csv(mechanism, rows, seed));
    std::cout << "wrote " << out_path << " (" << rows.size() << " rows)\n";
    return kExitOk;
}

int cmd_gen_data(const std::string& generator, int n, int classes, double radius, double sigma,
                 double noise, std::uint64_t seed, const std::string& out_path, bool force) {
    if (const char* env_seed = std::getenv("EDL_SEED"); env_seed != nullptr && *env_seed != '\0')
        seed = std::stoull(env_seed);
    TabularDataset data;
    if (generator == "gaussian_mixture") data = gaussian_mixture(n, classes, radius, sigma, seed);
    else if (generator == "two_spirals") data = two_spirals(n, noise, seed);
    else
        throw ConfigError("gen-data: unknown generator '" + generator +
                          "' (expected gaussian_mixture | two_spirals)");
    if (fs::exists(out_path) && !force)
        throw std::runtime_error("gen-data: output exists (use --force): " + out_path);
    write_dataset_csv(data, out_path);
    std::cout << "wrote " << out_path << " (" << data.num_points() << " rows)\n";
    return kExitOk;
}

int cmd_dump(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir, const std::string& tag, bool force) {
    const EnsembleModel model = load_checkpoint(checkpoint_path);
    const TabularDataset data = read_dataset_csv(data_path, model.arch.num_classes);
    const fs::path csv_path = fs::path(out_dir) / "preds.csv";
    if (fs::exists(csv_path) && !force)
        throw std::runtime_error("dump: output exists (use --force): " + csv_path.string());
    fs::create_directories(out_dir);
    dump_predictions(model, data, csv_path, tag);
    std::cout << "wrote " << csv_path.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ensemble diversity lab: gamma-regularized ensemble training and analysis"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;
    int jobs = 1;
    auto* train = app.add_subcommand("train", "Run the (regularizer, gamma, seed) training grid");
    train->add_option("--config", config_path, "Experiment config JSON")->required();
    train->add_flag("--force", force, "Overwrite existing run directories");
    train->add_option("--jobs", jobs, "Worker pool size for grid cells")->default_val(1);
    std::vector<std::string> overrides;
    train->add_option("--set", overrides,
                      "Override a config field before validation (path.to.field=value)");

    std::string runs_arg, kind = "summary", out_dir = ".", metric;
    std::string pool_mode = "homogeneous";
    int ensemble_size = 4, draws = 10;
    std::uint64_t analyze_seed = 0;
    auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses over stored run dumps");
    analyze->add_option("--runs", runs_arg, "Run directory (or parent of run directories)")
        ->required();
    analyze->add_option("--kind", kind, "summary | counterfactual | decompose | pool");
    analyze->add_option("--out", out_dir, "Output directory")->required();
    analyze->add_option("--metric", metric, "Restrict summary to one metric");
    analyze->add_option("--ensemble-size", ensemble_size, "Pool: members per ensemble");
    analyze->add_option("--mode", pool_mode, "Pool: homogeneous | heterogeneous");
    analyze->add_option("--draws", draws, "Pool: number of ensembles to draw");
    analyze->add_option("--seed", analyze_seed, "Pool: sampling seed");

    std::string mechanism, s_grid_arg, sim_out;
    int s_count = 21, samples = 100, members = 3, classes = 3;
    std::uint64_t sim_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "Controlled diversity sweeps on one point");
    simulate->add_option("--mechanism", mechanism, "geometric | logit_noise | dirichlet")
        ->required();
    simulate->add_option("--s-grid", s_grid_arg, "Comma-separated damage values in [0,1]");
    simulate->add_option("--s-count", s_count, "Evenly spaced grid size when --s-grid is absent");
    simulate->add_option("--samples", samples, "Draws per grid cell (stochastic mechanisms)");
    simulate->add_option("--members", members, "Ensemble size M");
    simulate->add_option("--classes", classes, "Class count C");
    simulate->add_option("--seed", sim_seed, "Stream seed");
    simulate->add_option("--out", sim_out, "Output CSV")->required();
    simulate->add_flag("--force", force, "Overwrite existing output");

    std::string generator, gen_out;
    int gen_n = 1000, gen_classes = 3;
    double radius = 2.0, sigma = 1.0, noise = 0.1;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset CSV");
    gen->add_option("--generator", generator, "gaussian_mixture | two_spirals")->required();
    gen->add_option("--n", gen_n, "Number of rows");
    gen->add_option("--classes", gen_classes, "Class count (gaussian_mixture)");
    gen->add_option("--radius", radius, "Circle radius of class means");
    gen->add_option("--sigma", sigma, "Per-class isotropic spread");
    gen->add_option("--noise", noise, "Spiral noise level");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output CSV")->required();
    gen->add_flag("--force", force, "Overwrite existing output");

    std::string ckpt_path, dump_data, dump_out, dump_tag = "checkpoint";
    auto* dump = app.add_subcommand("dump", "Re-export predictions for a stored checkpoint");
    dump->add_option("--checkpoint", ckpt_path, "Checkpoint JSON")->required();
    dump->add_option("--data", dump_data, "Dataset CSV")->required();
    dump->add_option("--out", dump_out, "Output directory")->required();
    dump->add_option("--tag", dump_tag, "Dump tag");
    dump->add_flag("--force", force, "Overwrite existing output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(config_path, force, jobs, overrides);
        if (app.got_subcommand(analyze))
            return cmd_analyze(runs_arg, kind, out_dir, metric, ensemble_size, pool_mode, draws,
                               analyze_seed);
        if (app.got_subcommand(simulate))
            return cmd_simulate(mechanism, s_grid_arg, s_count, samples, members, classes,
                                sim_seed, sim_out, force);
        if (app.got_subcommand(gen))
            return cmd_gen_data(generator, gen_n, gen_classes, radius, sigma, noise, gen_seed,
                                gen_out, force);
        if (app.got_subcommand(dump)) return cmd_dump(ckpt_path, dump_data, dump_out, dump_tag, force);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
