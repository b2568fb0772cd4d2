#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "edl/analysis.hpp"
#include "edl/datagen.hpp"
#include "edl/losses.hpp"
#include "edl/regularizers.hpp"
#include "edl/rng.hpp"
#include "edl/simlab.hpp"
#include "edl/training.hpp"
#include "edl/tree.hpp"

namespace py = pybind11;
using namespace edl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PredictionSet to_prediction_set(const Array& preds, const std::optional<std::vector<int>>& labels) {
    if (preds.ndim() != 3) throw std::invalid_argument("preds must have shape (M, N, C)");
    const int m_count = static_cast<int>(preds.shape(0));
    const int n_count = static_cast<int>(preds.shape(1));
    const int c_count = static_cast<int>(preds.shape(2));
    PredictionSet set(m_count, n_count, c_count);
    std::copy(preds.data(), preds.data() + preds.size(), set.data().begin());
    if (labels) set.set_labels(*labels);
    return set;
}

Matrix to_matrix(const Array& array) {
    if (array.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    Matrix m(array.shape(0), array.shape(1));
    std::copy(array.data(), array.data() + array.size(), m.data().begin());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> from_prediction_set(const PredictionSet& preds) {
    py::array_t<double> out({static_cast<std::size_t>(preds.num_members()),
                             static_cast<std::size_t>(preds.num_points()),
                             static_cast<std::size_t>(preds.num_classes())});
    std::copy(preds.data().begin(), preds.data().end(), out.mutable_data());
    return out;
}

LossKind make_loss(const std::string& name, double label_smoothing) {
    return parse_loss_kind(name, name == "cross_entropy" || name == "ce" ? label_smoothing : 0.0);
}

py::dict metrics_dict(const MetricsReport& report) {
    py::dict out;
    out["accuracy"] = report.accuracy;
    out["nll"] = report.nll;
    out["brier"] = report.brier;
    out["ece"] = report.ece;
    return out;
}

struct ForestHandle {
    std::vector<DecisionTree> trees;
    int num_classes = 0;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Ensemble diversity lab: risk decomposition, diversity regularizers, "
              "desk-scale models and simulations";

    m.def("softmax",
          [](const Array& logits) {
              if (logits.ndim() != 1) throw std::invalid_argument("logits must be 1-d");
              const auto out =
                  softmax(std::span<const double>(logits.data(), logits.shape(0)));
              return py::array_t<double>(out.size(), out.data());
          },
          py::arg("logits"), "Max-subtraction softmax of a logit vector.");

    m.def("ensemble_average",
          [](const Array& preds) {
              return from_matrix(ensemble_average(to_prediction_set(preds, std::nullopt)));
          },
          py::arg("preds"), "Member-mean prediction, shape (M, N, C) -> (N, C).");

    m.def("pad_and_renormalize",
          [](const Array& preds, double epsilon) {
              return from_prediction_set(pad_and_renormalize(
                  to_prediction_set(preds, std::nullopt), PaddingPolicy{epsilon}));
          },
          py::arg("preds"), py::arg("epsilon") = 1e-10,
          "Uniform additive padding p -> (p + eps) / (1 + C * eps).");

    m.def("decompose",
          [](const Array& preds, const std::vector<int>& labels, const std::string& loss,
             double label_smoothing) {
              const DecompositionReport report =
                  decompose(make_loss(loss, label_smoothing), to_prediction_set(preds, labels));
              py::array_t<double> per_point({report.per_point.size(), std::size_t{3}});
              auto view = per_point.mutable_unchecked<2>();
              for (std::size_t n = 0; n < report.per_point.size(); ++n) {
                  view(n, 0) = report.per_point[n].avg_loss;
                  view(n, 1) = report.per_point[n].ens_loss;
                  view(n, 2) = report.per_point[n].gap;
              }
              py::dict out;
              out["ensemble_risk"] = report.ensemble_risk;
              out["avg_member_risk"] = report.avg_member_risk;
              out["jensen_gap"] = report.jensen_gap;
              out["per_point"] = per_point;
              return out;
          },
          py::arg("preds"), py::arg("labels"), py::arg("loss") = "cross_entropy",
          py::arg("label_smoothing") = 0.0,
          "Ensemble risk = average member risk - jensen gap, with per-point rows "
          "(avg_loss, ens_loss, gap).");

    m.def("ce_gap_closed_form",
          [](const Array& preds, const std::vector<int>& labels) {
              const auto gaps = ce_gap_closed_form(to_prediction_set(preds, labels));
              return py::array_t<double>(gaps.size(), gaps.data());
          },
          py::arg("preds"), py::arg("labels"));

    m.def("mse_gap_closed_form",
          [](const Array& preds) {
              const auto gaps = mse_gap_closed_form(to_prediction_set(preds, std::nullopt));
              return py::array_t<double>(gaps.size(), gaps.data());
          },
          py::arg("preds"));

    m.def("metrics",
          [](const Array& preds, const std::vector<int>& labels, int num_bins) {
              return metrics_dict(
                  metrics(to_prediction_set(preds, labels), EceConfig{num_bins}));
          },
          py::arg("preds"), py::arg("labels"), py::arg("num_bins") = 15,
          "Accuracy / NLL / Brier / ECE of the ensemble-average prediction.");

    m.def("auxiliary_diversity",
          [](const Array& preds) {
              const AuxiliaryDiversity aux =
                  auxiliary_diversity(to_prediction_set(preds, std::nullopt));
              py::dict out;
              out["pairwise_correlation"] = aux.pairwise_correlation
                                                ? py::cast(*aux.pairwise_correlation)
                                                : py::none();
              out["avg_pairwise_kl"] = aux.avg_pairwise_kl;
              out["avg_cosine_similarity"] = aux.avg_cosine_similarity;
              return out;
          },
          py::arg("preds"));

    m.def("diversity_value",
          [](const std::string& kind, const Array& members, int label, const std::string& loss,
             double label_smoothing) {
              if (members.ndim() != 2) throw std::invalid_argument("members must be (M, C)");
              return diversity_value(
                  parse_regularizer(kind),
                  PointView{std::span<const double>(members.data(), members.size()),
                            static_cast<int>(members.shape(0)),
                            static_cast<int>(members.shape(1))},
                  label, make_loss(loss, label_smoothing));
          },
          py::arg("kind"), py::arg("members"), py::arg("label") = 0,
          py::arg("loss") = "cross_entropy", py::arg("label_smoothing") = 0.0,
          "Diversity of M member predictions at one point "
          "(variance | jsd_1va | jsd_uniform | jensen_gap).");

    m.def("objective_value",
          [](const Array& members, int label, const std::string& regularizer, double gamma,
             const std::string& loss, double label_smoothing) {
              if (members.ndim() != 2) throw std::invalid_argument("members must be (M, C)");
              const RegularizedObjectiveSpec spec{make_loss(loss, label_smoothing),
                                                  parse_regularizer(regularizer), gamma};
              return objective_value(
                  spec,
                  PointView{std::span<const double>(members.data(), members.size()),
                            static_cast<int>(members.shape(0)),
                            static_cast<int>(members.shape(1))},
                  label);
          },
          py::arg("members"), py::arg("label"), py::arg("regularizer") = "jensen_gap",
          py::arg("gamma") = 0.0, py::arg("loss") = "cross_entropy",
          py::arg("label_smoothing") = 0.0,
          "Average member loss plus gamma times the diversity measure.");

    m.def("objective_gradient",
          [](const Array& logits, int label, const std::string& regularizer, double gamma,
             const std::string& loss, double label_smoothing) {
              if (logits.ndim() != 2) throw std::invalid_argument("logits must be (M, C)");
              const RegularizedObjectiveSpec spec{make_loss(loss, label_smoothing),
                                                  parse_regularizer(regularizer), gamma};
              std::vector<double> grad(logits.size());
              objective_gradient(
                  spec,
                  PointView{std::span<const double>(logits.data(), logits.size()),
                            static_cast<int>(logits.shape(0)),
                            static_cast<int>(logits.shape(1))},
                  label, grad);
              py::array_t<double> out({logits.shape(0), logits.shape(1)});
              std::copy(grad.begin(), grad.end(), out.mutable_data());
              return out;
          },
          py::arg("logits"), py::arg("label"), py::arg("regularizer") = "jensen_gap",
          py::arg("gamma") = 0.0, py::arg("loss") = "cross_entropy",
          py::arg("label_smoothing") = 0.0,
          "Exact gradient of the regularized objective through per-member softmax.");

    m.def("run_sweep",
          [](const std::string& mechanism, const std::vector<double>& s_grid, int members,
             int classes, int samples, std::uint64_t seed) {
              DiversitySweepSpec spec;
              spec.mechanism = DiversityMechanism::parse(mechanism);
              spec.s_grid = s_grid;
              spec.num_members = members;
              spec.num_classes = classes;
              spec.num_samples = samples;
              SeededRng rng(seed);
              const auto rows = run_sweep(spec, rng);
              py::list out;
              for (const SweepRow& row : rows) {
                  py::dict r;
                  r["s"] = row.s;
                  r["jensen_gap"] = row.jensen_gap;
                  r["avg_member_nll"] = row.avg_member_nll;
                  r["ensemble_nll"] = row.ensemble_nll;
                  r["samples"] = row.samples;
                  out.append(std::move(r));
              }
              return out;
          },
          py::arg("mechanism"), py::arg("s_grid"), py::arg("members") = 3,
          py::arg("classes") = 3, py::arg("samples") = 100, py::arg("seed") = 0,
          "Controlled diversity sweep (geometric | logit_noise | dirichlet).");

    m.def("gaussian_mixture",
          [](int n, int classes, double radius, double sigma, std::uint64_t seed) {
              const TabularDataset data = gaussian_mixture(n, classes, radius, sigma, seed);
              return py::make_tuple(from_matrix(data.features),
                                    py::array_t<int>(data.labels.size(), data.labels.data()));
          },
          py::arg("n"), py::arg("classes") = 3, py::arg("radius") = 2.0, py::arg("sigma") = 1.0,
          py::arg("seed") = 0);

    m.def("two_spirals",
          [](int n, double noise, std::uint64_t seed) {
              const TabularDataset data = two_spirals(n, noise, seed);
              return py::make_tuple(from_matrix(data.features),
                                    py::array_t<int>(data.labels.size(), data.labels.data()));
          },
          py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);

    py::class_<ForestHandle>(m, "Forest")
        .def_property_readonly("num_trees",
                               [](const ForestHandle& f) { return f.trees.size(); })
        .def("predict", [](const ForestHandle& f, const Array& features) {
            const PredictionSet preds = forest_predict(f.trees, to_matrix(features));
            return from_prediction_set(preds);
        });

    m.def("fit_forest",
          [](const Array& features, const std::vector<int>& labels, int num_classes,
             int num_trees, int max_depth, double feature_fraction, std::uint64_t seed) {
              TabularDataset data;
              data.features = to_matrix(features);
              data.labels = labels;
              data.num_classes = num_classes;
              SeededRng rng(seed);
              ForestHandle handle;
              handle.trees = fit_forest(data, num_trees, max_depth, feature_fraction, rng);
              handle.num_classes = num_classes;
              return handle;
          },
          py::arg("features"), py::arg("labels"), py::arg("num_classes"),
          py::arg("num_trees") = 20, py::arg("max_depth") = 8,
          py::arg("feature_fraction") = 0.7, py::arg("seed") = 0,
          "Greedy CART forest with per-split feature subsampling.");

    m.def("train_ensemble",
          [](const Array& features, const std::vector<int>& labels, int num_classes,
             const std::vector<int>& hidden, const std::string& regularizer, double gamma,
             const std::string& loss, double label_smoothing, int members, int epochs,
             int batch_size, std::uint64_t seed, double learning_rate) {
              TabularDataset data;
              data.features = to_matrix(features);
              data.labels = labels;
              data.num_classes = num_classes;
              SeededRng split_rng = SeededRng(seed).child(1);
              const DataSplits splits = split_dataset(data, SplitFractions{}, split_rng);
              MlpArchitecture arch{data.num_features(), hidden, num_classes};
              TrainRunConfig config;
              config.objective = {make_loss(loss, label_smoothing),
                                  parse_regularizer(regularizer), gamma};
              config.num_members = members;
              config.epochs = epochs;
              config.batch_size = batch_size;
              config.seed = seed;
              config.optimizer.learning_rate = learning_rate;
              const TrainedEnsemble trained = train_joint(arch, std::nullopt, splits, config);
              py::dict out;
              out["test_preds"] = from_prediction_set(trained.test_preds);
              out["test_labels"] =
                  py::array_t<int>(splits.test.labels.size(), splits.test.labels.data());
              out["test_metrics"] = metrics_dict(metrics(trained.test_preds));
              const DecompositionReport report =
                  decompose(LossKind::cross_entropy(), trained.test_preds);
              out["test_jensen_gap"] = report.jensen_gap;
              out["epochs_run"] = trained.history.size();
              out["diverged"] = trained.diverged;
              return out;
          },
          py::arg("features"), py::arg("labels"), py::arg("num_classes"),
          py::arg("hidden") = std::vector<int>{32, 32}, py::arg("regularizer") = "jensen_gap",
          py::arg("gamma") = 0.0, py::arg("loss") = "cross_entropy",
          py::arg("label_smoothing") = 0.0, py::arg("members") = 4, py::arg("epochs") = 30,
          py::arg("batch_size") = 128, py::arg("seed") = 0, py::arg("learning_rate") = 5e-4,
          "Joint gamma-regularized training of an MLP ensemble on a 70/15/15 split.");
}
