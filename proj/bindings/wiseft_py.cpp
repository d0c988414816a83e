#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "wiseft/checkpoint.hpp"
#include "wiseft/datagen.hpp"
#include "wiseft/ensemble.hpp"
#include "wiseft/harness.hpp"
#include "wiseft/metrics.hpp"
#include "wiseft/model.hpp"
#include "wiseft/train.hpp"

namespace py = pybind11;
using namespace wiseft;

PYBIND11_MODULE(_wiseft, m) {
    m.doc() = "Weight-space ensembling laboratory: checkpoint algebra, synthetic "
              "distribution shifts, fine-tuning, and robustness analytics.";

    py::class_<CheckpointMeta>(m, "CheckpointMeta")
        .def(py::init<>())
        .def_readwrite("seed", &CheckpointMeta::seed)
        .def_readwrite("step", &CheckpointMeta::step)
        .def_readwrite("tag", &CheckpointMeta::tag);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readwrite("values", &Checkpoint::values)
        .def_readwrite("meta", &Checkpoint::meta)
        .def("validate", &Checkpoint::validate)
        .def("__len__", [](const Checkpoint& c) { return c.values.size(); });

    m.def("interpolate", &interpolate, py::arg("c0"), py::arg("c1"), py::arg("alpha"));
    m.def("param_distance", &param_distance, py::arg("c0"), py::arg("c1"));
    m.def("save_checkpoint", &save, py::arg("checkpoint"), py::arg("path"));
    m.def("load_checkpoint", &load, py::arg("path"));

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("rows", &Dataset::rows)
        .def_readonly("cols", &Dataset::cols)
        .def_readonly("features", &Dataset::features)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("tag", &Dataset::tag);

    py::class_<GenSpec>(m, "GenSpec")
        .def(py::init<>())
        .def_readwrite("k", &GenSpec::k)
        .def_readwrite("d_in", &GenSpec::d_in)
        .def_readwrite("per_class_train", &GenSpec::per_class_train)
        .def_readwrite("per_class_test", &GenSpec::per_class_test)
        .def_readwrite("cluster_spread", &GenSpec::cluster_spread)
        .def_readwrite("mean_scale", &GenSpec::mean_scale)
        .def_readwrite("pretrain_style_count", &GenSpec::pretrain_style_count)
        .def_readwrite("seed", &GenSpec::seed);

    py::class_<ShiftSpec>(m, "ShiftSpec")
        .def(py::init<>())
        .def_readwrite("rotation_angle", &ShiftSpec::rotation_angle)
        .def_readwrite("noise_sigma", &ShiftSpec::noise_sigma)
        .def_readwrite("mean_shift", &ShiftSpec::mean_shift)
        .def_readwrite("mask_fraction", &ShiftSpec::mask_fraction)
        .def_readwrite("seed", &ShiftSpec::seed);

    m.def("gen_reference", &gen_reference, py::arg("spec"));
    m.def("gen_pretrain_mixture", &gen_pretrain_mixture, py::arg("spec"));
    m.def("apply_shift", &apply_shift, py::arg("dataset"), py::arg("spec"));
    m.def("subsample_per_class", &subsample_per_class, py::arg("dataset"), py::arg("k_shot"),
          py::arg("seed"));

    m.def("clopper_pearson", &clopper_pearson, py::arg("correct"), py::arg("n"),
          py::arg("confidence") = 0.95);
    m.def("logit", &logit, py::arg("p"));
    m.def("sigmoid", &sigmoid, py::arg("t"));
    m.def(
        "fit_baseline",
        [](const std::vector<std::pair<double, double>>& points) {
            const RobustnessFit fit = fit_baseline(points);
            return py::make_tuple(fit.slope, fit.intercept);
        },
        py::arg("points"));
    m.def(
        "effective_robustness",
        [](double slope, double intercept, double acc_ref, double acc_shift) {
            RobustnessFit fit;
            fit.slope = slope;
            fit.intercept = intercept;
            return effective_robustness(fit, acc_ref, acc_shift);
        },
        py::arg("slope"), py::arg("intercept"), py::arg("acc_ref"), py::arg("acc_shift"));
    m.def(
        "prediction_diversity",
        [](const std::vector<int>& f, const std::vector<int>& g,
           const std::vector<int>& labels) { return prediction_diversity(f, g, labels); },
        py::arg("preds_f"), py::arg("preds_g"), py::arg("labels"));
    m.def(
        "cohens_kappa_complement",
        [](const std::vector<int>& f, const std::vector<int>& g, std::size_t k) {
            return cohens_kappa_complement(f, g, k);
        },
        py::arg("preds_f"), py::arg("preds_g"), py::arg("k"));
    m.def("mean_kl", &mean_kl, py::arg("logits_f"), py::arg("logits_g"));
    m.def("ckac", &ckac, py::arg("features_f"), py::arg("features_g"),
          py::arg("row_cap") = 10000, py::arg("seed") = 0);

    m.def(
        "run_experiment",
        [](const std::filesystem::path& config_path) {
            const auto config = ExperimentConfig::from_file(config_path);
            return run_experiment(config).string();
        },
        py::arg("config_path"));
}
