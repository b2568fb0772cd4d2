#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "edl/config.hpp"
#include "edl/datagen.hpp"
#include "edl/io.hpp"
#include "helpers.hpp"

using namespace edl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const char* cli_path() {
    const char* path = std::getenv("EDL_CLI");
    REQUIRE_MESSAGE(path != nullptr, "EDL_CLI must point at the edl binary");
    return path;
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("io_cli") {

TEST_CASE("dataset csv round trip preserves every bit") {
    TempDir dir("edl_io_dataset");
    const TabularDataset data = gaussian_mixture(50, 3, 2.0, 0.7, 77);
    write_dataset_csv(data, dir.path / "d.csv");
    const TabularDataset loaded = read_dataset_csv(dir.path / "d.csv");
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.labels == data.labels);
    CHECK(loaded.features.data() == data.features.data());
    const std::string header = slurp(dir.path / "d.csv").substr(0, 12);
    CHECK(header == "f0,f1,label\n");
}

TEST_CASE("prediction dump round trip reproduces metrics exactly") {
    TempDir dir("edl_io_dump");
    SeededRng rng(78);
    const PredictionSet preds = edltest::random_prediction_set(rng, 4, 25, 3);
    DumpMeta meta;
    meta.num_members = 4;
    meta.num_points = 25;
    meta.num_classes = 3;
    meta.seed = 9;
    meta.tag = "roundtrip";
    meta.gamma = -0.25;
    meta.regularizer = "variance";
    meta.labels = preds.labels();
    write_prediction_dump(preds, meta, dir.path / "p.csv");
    const PredictionDump loaded = read_prediction_dump(dir.path / "p.csv");
    CHECK(loaded.preds.data() == preds.data());
    CHECK(loaded.preds.labels() == preds.labels());
    CHECK(loaded.tag == "roundtrip");
    CHECK(loaded.gamma == -0.25);
    const MetricsReport a = metrics(preds), b = metrics(loaded.preds);
    CHECK(a.nll == b.nll);
    CHECK(a.ece == b.ece);
    const auto ra = decompose(LossKind::cross_entropy(), preds);
    const auto rb = decompose(LossKind::cross_entropy(), loaded.preds);
    CHECK(ra.jensen_gap == rb.jensen_gap);
}

TEST_CASE("decomposition reports serialize to json and per-point csv") {
    TempDir dir("edl_io_decomp");
    SeededRng rng(80);
    const PredictionSet preds = edltest::random_prediction_set(rng, 3, 4, 2);
    const DecompositionReport report = decompose(LossKind::cross_entropy(), preds);
    const std::string json_text = decomposition_to_json(report);
    CHECK(json_text.find("\"ensemble_risk\"") != std::string::npos);
    CHECK(json_text.find("\"avg_member_risk\"") != std::string::npos);
    CHECK(json_text.find("\"jensen_gap\"") != std::string::npos);
    write_decomposition_csv(report, dir.path / "d.csv");
    std::ifstream in(dir.path / "d.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "point,avg_loss,ens_loss,gap");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
}

TEST_CASE("atomic writes leave no temp files behind") {
    TempDir dir("edl_io_atomic");
    atomic_write_file(dir.path / "x.txt", "hello\n");
    CHECK(slurp(dir.path / "x.txt") == "hello\n");
    int files = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir.path)) ++files;
    CHECK(files == 1);
}

TEST_CASE("format_double round trips doubles through text") {
    SeededRng rng(79);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::exp(20.0 * rng.normal());
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("experiment config parses, validates and reports field paths") {
    TempDir dir("edl_io_config");
    const std::string good = R"({
        "dataset": {"type": "gaussian_mixture", "n": 100, "classes": 3, "seed": 5},
        "model": {"preset": "smaller"},
        "train": {"num_members": 2, "epochs": 3, "batch_size": 16, "seed": 1},
        "grid": {"regularizers": ["jensen_gap", "variance"], "gammas": [-0.5, 0.0, 0.5]},
        "seeds": [1, 2],
        "output_dir": "runs"
    })";
    {
        std::ofstream out(dir.path / "good.json");
        out << good;
    }
    const ExperimentConfig config = load_experiment_config(dir.path / "good.json");
    CHECK(config.grid().size() == 6);
    CHECK(config.seeds.size() == 2);

    const std::string missing_zero = R"({
        "dataset": {"type": "gaussian_mixture"},
        "grid": {"regularizers": ["variance"], "gammas": [0.5]},
        "output_dir": "runs"
    })";
    {
        std::ofstream out(dir.path / "nozero.json");
        out << missing_zero;
    }
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "nozero.json"),
                         doctest::Contains("grid.gammas"), ConfigError);

    const std::string bad_reg = R"({
        "dataset": {"type": "gaussian_mixture"},
        "grid": {"regularizers": ["bagging"], "gammas": [0.0]},
        "output_dir": "runs"
    })";
    {
        std::ofstream out(dir.path / "badreg.json");
        out << bad_reg;
    }
    CHECK_THROWS_WITH_AS(load_experiment_config(dir.path / "badreg.json"),
                         doctest::Contains("grid.regularizers"), ConfigError);
}

TEST_CASE("cli gen-data is deterministic and refuses accidental overwrite") {
    TempDir dir("edl_cli_gen");
    const std::string out1 = (dir.path / "a.csv").string();
    const std::string out2 = (dir.path / "b.csv").string();
    CHECK(run_cli("gen-data --generator gaussian_mixture --n 50 --classes 2 --seed 4 --out " +
                  out1) == 0);
    CHECK(run_cli("gen-data --generator gaussian_mixture --n 50 --classes 2 --seed 4 --out " +
                  out2) == 0);
    CHECK(slurp(out1) == slurp(out2));
    CHECK(run_cli("gen-data --generator gaussian_mixture --n 50 --classes 2 --seed 4 --out " +
                  out1) == 1);  // exists, no --force
    CHECK(run_cli("gen-data --generator gaussian_mixture --n 50 --classes 2 --seed 5 --force "
                  "--out " + out1) == 0);
    CHECK(slurp(out1) != slurp(out2));
}

TEST_CASE("cli rejects unknown flags and generators") {
    TempDir dir("edl_cli_bad");
    CHECK(run_cli("gen-data --generator moons --n 10 --out " + (dir.path / "x.csv").string()) ==
          2);
    CHECK(run_cli("simulate --mechanism geometric --out x.csv --no-such-flag") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("train") == 2);  // missing required --config
}

TEST_CASE("cli simulate honors EDL_SEED") {
    TempDir dir("edl_cli_sim");
    const std::string a = (dir.path / "a.csv").string();
    const std::string b = (dir.path / "b.csv").string();
    const std::string c = (dir.path / "c.csv").string();
    CHECK(run_cli("simulate --mechanism dirichlet --s-count 5 --samples 20 --seed 1 --out " + a) ==
          0);
    CHECK(run_cli("simulate --mechanism dirichlet --s-count 5 --samples 20 --seed 2 --out " + b,
                  "EDL_SEED=1") == 0);
    CHECK(run_cli("simulate --mechanism dirichlet --s-count 5 --samples 20 --seed 2 --out " + c) ==
          0);
    CHECK(slurp(a) == slurp(b));  // EDL_SEED overrode --seed 2
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("cli runs the full regularizer grid with one directory per cell") {
    TempDir dir("edl_cli_grid");
    const std::string config = R"({
        "dataset": {"type": "gaussian_mixture", "n": 60, "classes": 2, "seed": 4},
        "model": {"type": "mlp", "hidden": [4]},
        "train": {"num_members": 2, "epochs": 1, "batch_size": 32, "seed": 1},
        "grid": {"regularizers": ["jensen_gap", "variance", "jsd_1va", "jsd_uniform"],
                 "gammas": [-0.9, -0.5, 0.0, 0.5, 1.0]},
        "seeds": [1, 2, 3],
        "output_dir": ")" + (dir.path / "runs").string() + R"("
    })";
    {
        std::ofstream out(dir.path / "config.json");
        out << config;
    }
    CHECK(run_cli("train --config " + (dir.path / "config.json").string() + " --jobs 4") == 0);
    int run_dirs = 0;
    for (const auto& entry : fs::directory_iterator(dir.path / "runs"))
        if (entry.is_directory()) ++run_dirs;
    CHECK(run_dirs == 60);  // 4 regularizers x 5 gammas x 3 seeds
    const std::string out = (dir.path / "reports").string();
    CHECK(run_cli("analyze --runs " + (dir.path / "runs").string() +
                  " --kind summary --metric accuracy --out " + out) == 0);
    const std::string summary = slurp(fs::path(out) / "summary.json");
    std::size_t verdicts = 0, pos = 0;
    while ((pos = summary.find("\"verdict\"", pos)) != std::string::npos) {
        ++verdicts;
        pos += 9;
    }
    CHECK(verdicts == 20);  // one per (regularizer, gamma) cell
}

TEST_CASE("cli train, analyze and dump work end to end") {
    TempDir dir("edl_cli_train");
    const std::string config = R"({
        "dataset": {"type": "gaussian_mixture", "n": 120, "classes": 2, "sigma": 1.0, "seed": 3},
        "model": {"type": "mlp", "hidden": [8]},
        "train": {"num_members": 2, "epochs": 3, "batch_size": 32, "seed": 1,
                  "early_stopping": {"enabled": false}},
        "grid": {"regularizers": ["jensen_gap"], "gammas": [-0.5, 0.0]},
        "seeds": [1, 2],
        "output_dir": ")" + (dir.path / "runs").string() + R"("
    })";
    {
        std::ofstream out(dir.path / "config.json");
        out << config;
    }
    const std::string cfg = (dir.path / "config.json").string();
    CHECK(run_cli("train --config " + cfg) == 0);
    int run_dirs = 0;
    for (const auto& entry : fs::directory_iterator(dir.path / "runs"))
        if (entry.is_directory()) {
            ++run_dirs;
            CHECK(fs::exists(entry.path() / "history.csv"));
            CHECK(fs::exists(entry.path() / "checkpoint.json"));
            CHECK(fs::exists(entry.path() / "preds_test.csv"));
            CHECK(fs::exists(entry.path() / "config.json"));
        }
    CHECK(run_dirs == 4);  // 2 gammas x 2 seeds
    CHECK(run_cli("train --config " + cfg) == 1);          // append-only
    CHECK(run_cli("train --config " + cfg + " --force --jobs 2") == 0);

    // reruns are bit-identical
    const std::string dump_a =
        slurp(dir.path / "runs" / "jensen_gap_g0_s1" / "preds_test.csv");
    CHECK(run_cli("train --config " + cfg + " --force") == 0);
    CHECK(slurp(dir.path / "runs" / "jensen_gap_g0_s1" / "preds_test.csv") == dump_a);

    const std::string out = (dir.path / "reports").string();
    CHECK(run_cli("analyze --runs " + (dir.path / "runs").string() + " --kind summary --out " +
                  out) == 0);
    CHECK(fs::exists(fs::path(out) / "summary.json"));
    CHECK(run_cli("analyze --runs " + (dir.path / "runs").string() + " --kind decompose --out " +
                  out) == 0);
    // residual column is the last field of every row; all tiny
    std::ifstream scatter(fs::path(out) / "decomposition.csv");
    std::string line;
    std::getline(scatter, line);  // header
    int rows = 0;
    while (std::getline(scatter, line)) {
        const double residual = std::stod(line.substr(line.rfind(',') + 1));
        CHECK(std::abs(residual) <= 1e-10);
        ++rows;
    }
    CHECK(rows == 4);
    CHECK(run_cli("analyze --runs " + (dir.path / "runs").string() +
                  " --kind counterfactual --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "counterfactual_jensen_gap.csv"));
    CHECK(run_cli("analyze --runs " + (dir.path / "runs").string() +
                  " --kind pool --ensemble-size 2 --draws 3 --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "pool.csv"));

    // --set overrides reach the parsed config
    const std::string override_out = (dir.path / "runs_override").string();
    CHECK(run_cli("train --config " + cfg + " --set output_dir=" + override_out +
                  " --set train.epochs=1 --set \"grid.gammas=[0.0]\" --set \"seeds=[1,2]\"") ==
          0);
    int override_dirs = 0;
    for (const auto& entry : fs::directory_iterator(override_out))
        if (entry.is_directory()) ++override_dirs;
    CHECK(override_dirs == 2);  // one gamma, two seeds
    {
        std::ifstream hist(fs::path(override_out) / "jensen_gap_g0_s1" / "history.csv");
        std::string line;
        int rows = -1;
        while (std::getline(hist, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 1);  // train.epochs=1 took effect
    }

    // dump an existing checkpoint against a dataset file
    const std::string data_csv = (dir.path / "data.csv").string();
    CHECK(run_cli("gen-data --generator gaussian_mixture --n 30 --classes 2 --seed 3 --out " +
                  data_csv) == 0);
    CHECK(run_cli("dump --checkpoint " +
                  (dir.path / "runs" / "jensen_gap_g0_s1" / "checkpoint.json").string() +
                  " --data " + data_csv + " --out " + (dir.path / "dumped").string()) == 0);
    const PredictionDump redumped = read_prediction_dump(dir.path / "dumped" / "preds.csv");
    CHECK(redumped.preds.num_points() == 30);
}

}  // TEST_SUITE
