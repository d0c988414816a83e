#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "wiseft/ensemble.hpp"
#include "wiseft/errors.hpp"
#include "wiseft/harness.hpp"
#include "wiseft/prng.hpp"

namespace fs = std::filesystem;
using namespace wiseft;

namespace {

ExperimentConfig load_config(const std::string& config_path, std::uint64_t seed_override,
                             const std::string& out_override) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot open config: " + config_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    // Overriding the master seed re-derives every seed the config left implicit.
    if (seed_override != 0) j["master_seed"] = seed_override;
    ExperimentConfig config = ExperimentConfig::from_json(j);
    if (!out_override.empty()) config.output_dir = out_override;
    return config;
}

std::pair<Checkpoint, Checkpoint> load_endpoints(const fs::path& out) {
    return {load(out / "theta0.ckpt"), load(out / "theta1.ckpt")};
}

int dispatch(const std::string& cmd, const ExperimentConfig& config, double alpha,
             const std::string& c0_path, const std::string& c1_path,
             const std::string& output_path, const std::string& points_path) {
    const fs::path out = config.output_dir;

    if (cmd == "run") {
        run_experiment(config);
        std::cout << "wrote experiment artifacts to " << out.string() << "\n";
        return 0;
    }
    if (cmd == "pretrain") {
        const ExperimentData data = build_data(config);
        const Checkpoint theta0 = build_zero_shot(config, data);
        fs::create_directories(out);
        save(theta0, out / "theta0.ckpt");
        std::cout << "wrote " << (out / "theta0.ckpt").string() << "\n";
        return 0;
    }
    if (cmd == "finetune") {
        const ExperimentData data = build_data(config);
        const Checkpoint theta0 =
            c0_path.empty() ? load(out / "theta0.ckpt") : load(c0_path);
        Dataset train_data = data.ref_train;
        if (config.k_shot)
            train_data = subsample_per_class(train_data, *config.k_shot,
                                             stream_seed("k-shot", config.master_seed));
        auto [theta1, trace] = finetune(config.model, theta0, train_data, config.finetune);
        fs::create_directories(out);
        save(theta1, out / "theta1.ckpt");
        trace.write_csv(out / "trace.csv");
        std::cout << "wrote " << (out / "theta1.ckpt").string() << "\n";
        return 0;
    }
    if (cmd == "interpolate") {
        const Checkpoint c0 = load(c0_path);
        const Checkpoint c1 = load(c1_path);
        const Checkpoint mixed = interpolate(c0, c1, alpha);
        const fs::path dest = output_path.empty() ? fs::path("interpolated.ckpt")
                                                  : fs::path(output_path);
        save(mixed, dest);
        std::cout << "wrote " << dest.string() << "\n";
        return 0;
    }
    if (cmd == "sweep") {
        const ExperimentData data = build_data(config);
        const auto [theta0, theta1] = load_endpoints(out);
        const AlphaSweep sweep = run_sweep(config, data, theta0, theta1);
        emit_sweep_csv(sweep, out / "sweep.csv");
        std::ofstream os(out / "sweep.json", std::ios::trunc);
        os << sweep_to_json(sweep).dump(2) << "\n";
        std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
        return 0;
    }
    if (cmd == "diversity") {
        const ExperimentData data = build_data(config);
        const auto [theta0, theta1] = load_endpoints(out);
        std::ofstream os(out / "diversity.json", std::ios::trunc);
        os << diversity_report(config, data, theta0, theta1).dump(2) << "\n";
        std::cout << "wrote " << (out / "diversity.json").string() << "\n";
        return 0;
    }
    if (cmd == "fit-baseline") {
        std::ifstream is(points_path);
        if (!is) throw ConfigError("cannot open points file: " + points_path);
        std::vector<std::pair<double, double>> points;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("acc", 0) == 0) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos)
                throw ConfigError("points file: expected 'acc_ref,acc_shift' rows");
            points.emplace_back(std::stod(line.substr(0, comma)),
                                std::stod(line.substr(comma + 1)));
        }
        const RobustnessFit fit = fit_baseline(points);
        nlohmann::json j = {{"slope", fit.slope},
                            {"intercept", fit.intercept},
                            {"residuals", fit.residuals}};
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    if (cmd == "plot") {
        const ExperimentData data = build_data(config);
        const auto [theta0, theta1] = load_endpoints(out);
        const AlphaSweep sweep = run_sweep(config, data, theta0, theta1);
        std::vector<std::pair<double, double>> pts;
        for (const auto& pt : sweep.points)
            pts.emplace_back(pt.ref.accuracy, pt.avg_shifts);
        fs::create_directories(out / "plots");
        std::ofstream os(out / "plots" / "scatter.svg", std::ios::trunc);
        os << render_scatter_svg(pts, nullptr, &sweep);
        std::cout << "wrote " << (out / "plots" / "scatter.svg").string() << "\n";
        return 0;
    }
    throw ConfigError("unknown subcommand: " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"WiSE-FT weight-space ensembling laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    std::string out_override;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--seed", seed_override, "override master_seed");
    app.add_option("--out", out_override, "override output directory");

    double alpha = 0.5;
    std::string c0_path, c1_path, output_path, points_path;

    auto* run = app.add_subcommand("run", "full pipeline: pretrain, fine-tune, sweep, analyze");
    auto* pretrain = app.add_subcommand("pretrain", "build the zero-shot proxy theta0");
    auto* ft = app.add_subcommand("finetune", "fine-tune theta0 on the reference train set");
    ft->add_option("--init", c0_path, "initial checkpoint (default <out>/theta0.ckpt)");
    auto* interp = app.add_subcommand("interpolate", "weight-space interpolation of two checkpoints");
    interp->add_option("--alpha", alpha, "mixing coefficient in [0,1]")->required();
    interp->add_option("--c0", c0_path, "zero-shot checkpoint")->required();
    interp->add_option("--c1", c1_path, "fine-tuned checkpoint")->required();
    interp->add_option("--output", output_path, "destination .ckpt path");
    auto* sweep = app.add_subcommand("sweep", "alpha sweep over saved endpoint checkpoints");
    auto* diversity = app.add_subcommand("diversity", "diversity report between saved endpoints");
    auto* fitb = app.add_subcommand("fit-baseline", "fit the logit-space robustness baseline");
    fitb->add_option("--points", points_path, "CSV of acc_ref,acc_shift rows")->required();
    auto* plot = app.add_subcommand("plot", "render the robustness scatter SVG");

    CLI11_PARSE(app, argc, argv);

    std::string cmd;
    for (auto* sub : {run, pretrain, ft, interp, sweep, diversity, fitb, plot})
        if (sub->parsed()) cmd = sub->get_name();

    try {
        const bool needs_config = cmd != "interpolate" && cmd != "fit-baseline";
        if (needs_config && config_path.empty())
            throw ConfigError("--config is required for '" + cmd + "'");
        ExperimentConfig config;
        if (needs_config) config = load_config(config_path, seed_override, out_override);
        return dispatch(cmd, config, alpha, c0_path, c1_path, output_path, points_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
