#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiseft/checkpoint.hpp"
#include "wiseft/datagen.hpp"
#include "wiseft/dataset.hpp"
#include "wiseft/metrics.hpp"
#include "wiseft/model.hpp"
#include "wiseft/train.hpp"

namespace wiseft {

struct EmaConfig {
    EmaVariant variant = EmaVariant::ZeroInitDebiased;
    double decay = 0.99;
};

/// One experiment: data recipe, training recipes, evaluation grid, outputs.
struct ExperimentConfig {
    ModelSpec model;
    GenSpec gen;
    std::vector<std::pair<std::string, ShiftSpec>> shifts;
    TrainConfig pretrain;
    TrainConfig finetune;
    std::vector<double> alpha_grid;
    std::optional<std::size_t> k_shot;
    std::optional<EmaConfig> ema;
    std::set<std::string> baselines_to_run;
    std::filesystem::path output_dir = "out";
    std::uint64_t master_seed = 0;

    void validate() const;

    // Seed fields left at zero are derived deterministically from
    // master_seed, one independent stream per purpose.
    void resolve_seeds();

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::filesystem::path& path);
};

/// All datasets one experiment touches.
struct ExperimentData {
    Dataset ref_train;
    Dataset ref_test;
    Dataset pretrain_mixture;
    std::vector<std::pair<std::string, Dataset>> shifted_tests;
};

ExperimentData build_data(const ExperimentConfig& config);

// Pre-trains the encoder end-to-end on the mixture, then rebuilds the head
// from prototype embeddings of held-out mixture samples.
Checkpoint build_zero_shot(const ExperimentConfig& config, const ExperimentData& data);

struct AlphaPoint {
    double alpha = 0.0;
    EvalResult ref;
    std::vector<EvalResult> shifts;
    double avg_shifts = 0.0;
    double avg_ref_shifts = 0.0;
};

struct AlphaSweep {
    std::vector<std::string> shift_names;
    std::vector<AlphaPoint> points;
};

EvalResult evaluate_checkpoint(const ModelSpec& spec, const Checkpoint& c, const Dataset& d);

AlphaSweep run_sweep(const ExperimentConfig& config, const ExperimentData& data,
                     const Checkpoint& theta0, const Checkpoint& theta1);

void emit_sweep_csv(const AlphaSweep& sweep, const std::filesystem::path& path);
nlohmann::json sweep_to_json(const AlphaSweep& sweep);

nlohmann::json diversity_report(const ExperimentConfig& config, const ExperimentData& data,
                                const Checkpoint& theta0, const Checkpoint& theta1);

/// Logit-scaled scatter in the robustness-plot style: baseline fit line,
/// fitting points, and the alpha curve with Clopper-Pearson bars.
struct ScatterStyle {
    double width = 640.0;
    double height = 480.0;
    double margin = 70.0;
    double p_lo = 0.05;  // probability axis range
    double p_hi = 0.995;

    double x_scale() const { return (width - 2.0 * margin) / (logit(p_hi) - logit(p_lo)); }
    double y_scale() const { return (height - 2.0 * margin) / (logit(p_hi) - logit(p_lo)); }
    double x_px(double p) const { return margin + x_scale() * (logit(p) - logit(p_lo)); }
    double y_px(double p) const {
        return height - margin - y_scale() * (logit(p) - logit(p_lo));
    }
};

std::string render_scatter_svg(const std::vector<std::pair<double, double>>& points,
                               const RobustnessFit* fit, const AlphaSweep* curve,
                               const ScatterStyle& style = {});

// Runs every stage and writes theta0.ckpt, theta1.ckpt, sweep.csv/json,
// diversity.json, robustness.json, trace.csv, plots/*.svg under output_dir.
// On failure partial outputs are removed and the stage name is reported.
std::filesystem::path run_experiment(const ExperimentConfig& config);

}  // namespace wiseft
