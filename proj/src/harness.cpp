#include "wiseft/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wiseft/ensemble.hpp"
#include "wiseft/errors.hpp"
#include "wiseft/format.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

namespace {

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation: " + s);
}

TrainMode mode_from_string(const std::string& s) {
    if (s == "end2end") return TrainMode::EndToEnd;
    if (s == "linear_head") return TrainMode::LinearHead;
    throw ConfigError("unknown train mode: " + s);
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.mode = mode_from_string(j.value("mode", "linear_head"));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_max = j.value("lr_max", c.lr_max);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.l1 = j.value("l1", c.l1);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.reg_to_init = j.value("reg_to_init", c.reg_to_init);
    c.distill_alpha = j.value("distill_alpha", c.distill_alpha);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    c.seed = j.value("seed", c.seed);
    return c;
}

double clamp_accuracy(std::size_t correct, std::size_t n) {
    const double lo = 1.0 / (2.0 * static_cast<double>(n));
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    return std::clamp(acc, lo, 1.0 - lo);
}

}  // namespace

void ExperimentConfig::validate() const {
    model.layout();  // throws on a malformed spec
    gen.validate();
    for (const auto& [name, s] : shifts) {
        if (name.empty()) throw ConfigError("shift with empty name");
        s.validate();
    }
    if (alpha_grid.size() < 2) throw ConfigError("alpha_grid needs at least the endpoints");
    if (!std::is_sorted(alpha_grid.begin(), alpha_grid.end()))
        throw ConfigError("alpha_grid must be sorted");
    if (std::adjacent_find(alpha_grid.begin(), alpha_grid.end()) != alpha_grid.end())
        throw ConfigError("alpha_grid must not contain duplicates");
    if (alpha_grid.front() != 0.0 || alpha_grid.back() != 1.0)
        throw ConfigError("alpha_grid must contain the endpoints 0 and 1");
    for (double a : alpha_grid)
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha_grid values must lie in [0,1]");
    if (model.d_in() != gen.d_in)
        throw ConfigError("model d_in does not match generator d_in");
    if (model.k != gen.k) throw ConfigError("model k does not match generator k");
    if (k_shot && *k_shot == 0) throw ConfigError("k_shot must be positive when set");
}

void ExperimentConfig::resolve_seeds() {
    if (gen.seed == 0) gen.seed = stream_seed("gen", master_seed);
    if (pretrain.seed == 0) pretrain.seed = stream_seed("pretrain", master_seed);
    if (finetune.seed == 0) finetune.seed = stream_seed("finetune", master_seed);
    for (auto& [name, s] : shifts)
        if (s.seed == 0) s.seed = stream_seed("shift-" + name, master_seed);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        const auto& jm = j.at("model");
        c.model.layer_widths = jm.at("layer_widths").get<std::vector<std::size_t>>();
        c.model.activation = activation_from_string(jm.value("activation", "relu"));
        c.model.k = jm.at("k").get<std::size_t>();
        c.model.normalize_features = jm.value("normalize_features", false);

        const auto& jg = j.at("gen");
        c.gen.k = jg.value("k", c.model.k);
        c.gen.d_in = jg.value("d_in", c.model.d_in());
        c.gen.per_class_train = jg.value("per_class_train", c.gen.per_class_train);
        c.gen.per_class_test = jg.value("per_class_test", c.gen.per_class_test);
        c.gen.cluster_spread = jg.value("cluster_spread", c.gen.cluster_spread);
        c.gen.mean_scale = jg.value("mean_scale", c.gen.mean_scale);
        c.gen.pretrain_style_count =
            jg.value("pretrain_style_count", c.gen.pretrain_style_count);
        c.gen.seed = jg.value("seed", c.gen.seed);

        for (const auto& js : j.value("shifts", nlohmann::json::array())) {
            ShiftSpec s;
            s.rotation_angle = js.value("rotation_angle", 0.0);
            s.noise_sigma = js.value("noise_sigma", 0.0);
            s.mean_shift = js.value("mean_shift", 0.0);
            s.mask_fraction = js.value("mask_fraction", 0.0);
            s.seed = js.value("seed", std::uint64_t{0});
            c.shifts.emplace_back(js.at("name").get<std::string>(), s);
        }

        if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"));
        if (j.contains("finetune")) c.finetune = train_config_from_json(j.at("finetune"));
        c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
        if (j.contains("k_shot") && !j.at("k_shot").is_null())
            c.k_shot = j.at("k_shot").get<std::size_t>();
        if (j.contains("ema") && !j.at("ema").is_null()) {
            EmaConfig e;
            const std::string variant = j.at("ema").value("variant", "zero-init-debiased");
            if (variant == "zero-init-debiased")
                e.variant = EmaVariant::ZeroInitDebiased;
            else if (variant == "init-biased")
                e.variant = EmaVariant::InitBiased;
            else
                throw ConfigError("unknown ema variant: " + variant);
            e.decay = j.at("ema").value("decay", e.decay);
            c.ema = e;
        }
        for (const auto& b : j.value("baselines_to_run", nlohmann::json::array()))
            c.baselines_to_run.insert(b.get<std::string>());
        c.output_dir = j.value("output_dir", std::string("out"));
        c.master_seed = j.value("master_seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad experiment config: ") + e.what());
    }
    c.resolve_seeds();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

ExperimentData build_data(const ExperimentConfig& config) {
    ExperimentData data;
    auto [train, test] = gen_reference(config.gen);
    data.ref_train = std::move(train);
    data.ref_test = std::move(test);
    data.pretrain_mixture = gen_pretrain_mixture(config.gen);
    for (const auto& [name, s] : config.shifts) {
        Dataset shifted = apply_shift(data.ref_test, s);
        shifted.tag = name;
        data.shifted_tests.emplace_back(name, std::move(shifted));
    }
    return data;
}

Checkpoint build_zero_shot(const ExperimentConfig& config, const ExperimentData& data) {
    const Checkpoint init =
        config.model.init_checkpoint(stream_seed("pretrain-init", config.master_seed));
    auto [pretrained, trace] = finetune(config.model, init, data.pretrain_mixture,
                                        config.pretrain);

    // Held-out samples around the same class means, embedded by the
    // pre-trained encoder, become the zero-shot head columns. A dedicated
    // stream keeps them disjoint from the train/test draws.
    const auto means = class_means(config.gen);
    const std::size_t per_class = std::max<std::size_t>(config.gen.per_class_train / 4, 8);
    auto proto_rng = make_stream("prototypes", config.gen.seed);
    std::vector<std::vector<std::vector<double>>> prototype_sets(config.model.k);
    for (std::size_t c2 = 0; c2 < config.model.k; ++c2) {
        for (std::size_t s = 0; s < per_class; ++s) {
            std::vector<double> x(config.gen.d_in);
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] = means[c2][j] + config.gen.cluster_spread * proto_rng.next_gaussian();
            prototype_sets[c2].push_back(forward_features(config.model, pretrained, x));
        }
    }
    const auto head = build_zero_shot_head(prototype_sets);

    Checkpoint theta0 = std::move(pretrained);
    std::copy(head.begin(), head.end(), theta0.param("head"));
    theta0.meta.tag = "zero-shot";
    return theta0;
}

EvalResult evaluate_checkpoint(const ModelSpec& spec, const Checkpoint& c, const Dataset& d) {
    if (d.rows == 0) throw DataError("evaluate_checkpoint: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.rows; ++i) {
        const auto z = logits(spec, c, std::span<const double>(d.row(i), d.cols));
        if (predict(z) == d.labels[i]) ++correct;
    }
    return make_eval_result(d.tag, correct, d.rows);
}

AlphaSweep run_sweep(const ExperimentConfig& config, const ExperimentData& data,
                     const Checkpoint& theta0, const Checkpoint& theta1) {
    AlphaSweep sweep;
    for (const auto& [name, ds] : data.shifted_tests) sweep.shift_names.push_back(name);
    for (double alpha : config.alpha_grid) {
        const Checkpoint mixed = interpolate(theta0, theta1, alpha);
        AlphaPoint pt;
        pt.alpha = alpha;
        pt.ref = evaluate_checkpoint(config.model, mixed, data.ref_test);
        double shift_sum = 0.0;
        for (const auto& [name, ds] : data.shifted_tests) {
            pt.shifts.push_back(evaluate_checkpoint(config.model, mixed, ds));
            shift_sum += pt.shifts.back().accuracy;
        }
        pt.avg_shifts =
            pt.shifts.empty() ? 0.0 : shift_sum / static_cast<double>(pt.shifts.size());
        pt.avg_ref_shifts = 0.5 * (pt.ref.accuracy + pt.avg_shifts);
        sweep.points.push_back(std::move(pt));
    }
    return sweep;
}

void emit_sweep_csv(const AlphaSweep& sweep, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw CodecError("cannot open for writing: " + path.string());
    os << "alpha,ref_acc,ref_ci_low,ref_ci_high";
    for (const auto& name : sweep.shift_names) os << ',' << name << "_acc";
    os << ",avg_shifts,avg_ref_shifts\n";
    for (const auto& pt : sweep.points) {
        os << format_double(pt.alpha) << ',' << format_double(pt.ref.accuracy) << ','
           << format_double(pt.ref.ci_low) << ',' << format_double(pt.ref.ci_high);
        for (const auto& s : pt.shifts) os << ',' << format_double(s.accuracy);
        os << ',' << format_double(pt.avg_shifts) << ',' << format_double(pt.avg_ref_shifts)
           << "\n";
    }
    if (!os) throw CodecError("write failed: " + path.string());
}

namespace {

nlohmann::json eval_to_json(const EvalResult& r) {
    return {{"tag", r.tag},       {"n", r.n},           {"correct", r.correct},
            {"accuracy", r.accuracy}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high}};
}

}  // namespace

nlohmann::json sweep_to_json(const AlphaSweep& sweep) {
    nlohmann::json j;
    j["shift_names"] = sweep.shift_names;
    auto& pts = j["points"] = nlohmann::json::array();
    for (const auto& pt : sweep.points) {
        nlohmann::json p;
        p["alpha"] = pt.alpha;
        p["ref"] = eval_to_json(pt.ref);
        auto& shifts = p["shifts"] = nlohmann::json::array();
        for (const auto& s : pt.shifts) shifts.push_back(eval_to_json(s));
        p["avg_shifts"] = pt.avg_shifts;
        p["avg_ref_shifts"] = pt.avg_ref_shifts;
        pts.push_back(std::move(p));
    }
    return j;
}

nlohmann::json diversity_report(const ExperimentConfig& config, const ExperimentData& data,
                                const Checkpoint& theta0, const Checkpoint& theta1) {
    const Dataset& d = data.ref_test;
    const Checkpoint mid = interpolate(theta0, theta1, 0.5);

    std::vector<int> preds0, preds1, preds_ens;
    std::vector<std::vector<double>> logits0, logits1, feats0, feats1;
    for (std::size_t i = 0; i < d.rows; ++i) {
        std::span<const double> x(d.row(i), d.cols);
        logits0.push_back(logits(config.model, theta0, x));
        logits1.push_back(logits(config.model, theta1, x));
        preds0.push_back(predict(logits0.back()));
        preds1.push_back(predict(logits1.back()));
        preds_ens.push_back(predict(logits(config.model, mid, x)));
        feats0.push_back(forward_features(config.model, theta0, x));
        feats1.push_back(forward_features(config.model, theta1, x));
    }

    nlohmann::json j;
    j["dataset"] = d.tag;
    j["pd"] = prediction_diversity(preds0, preds1, d.labels);
    const auto cc = cohens_kappa_complement(preds0, preds1, config.model.k);
    j["cc"] = cc ? nlohmann::json(*cc) : nlohmann::json(nullptr);
    j["kl_mean"] = mean_kl(logits0, logits1);
    const auto ck = ckac(feats0, feats1, 10000, stream_seed("ckac", config.master_seed));
    j["ckac"] = ck ? nlohmann::json(*ck) : nlohmann::json(nullptr);
    j["margin_zero_shot"] = margin_stats(logits0);
    j["margin_finetuned"] = margin_stats(logits1);
    const auto ov = override_analysis(preds0, preds1, preds_ens);
    j["frac_overrides"] = ov.overrides;
    j["frac_overridden"] = ov.overridden;
    j["frac_neither"] = ov.neither;
    return j;
}

std::string render_scatter_svg(const std::vector<std::pair<double, double>>& points,
                               const RobustnessFit* fit, const AlphaSweep* curve,
                               const ScatterStyle& st) {
    if (points.empty() && (curve == nullptr || curve->points.empty()))
        throw DataError("render_scatter_svg: nothing to draw");

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << st.width << "\" height=\""
        << st.height << "\" viewBox=\"0 0 " << st.width << ' ' << st.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    const double x0 = st.margin, x1 = st.width - st.margin;
    const double y0 = st.height - st.margin, y1 = st.margin;
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
        << "\" stroke=\"black\"/>\n";

    // logit-spaced ticks with probability labels
    const double ticks[] = {0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99};
    for (double t : ticks) {
        if (t <= st.p_lo || t >= st.p_hi) continue;
        const double tx = st.x_px(t), ty = st.y_px(t);
        svg << "<line x1=\"" << tx << "\" y1=\"" << y0 << "\" x2=\"" << tx << "\" y2=\""
            << y0 + 6 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << tx << "\" y=\"" << y0 + 20
            << "\" font-size=\"11\" text-anchor=\"middle\">" << t * 100 << "</text>\n";
        svg << "<line x1=\"" << x0 - 6 << "\" y1=\"" << ty << "\" x2=\"" << x0 << "\" y2=\""
            << ty << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << x0 - 10 << "\" y=\"" << ty + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << t * 100 << "</text>\n";
    }
    svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << st.height - 15
        << "\" font-size=\"13\" text-anchor=\"middle\">reference accuracy (%)</text>\n";
    svg << "<text x=\"18\" y=\"" << (y0 + y1) / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << (y0 + y1) / 2 << ")\">shift accuracy (%)</text>\n";

    auto in_range = [&st](double p) { return p > st.p_lo && p < st.p_hi; };

    if (fit != nullptr) {
        // baseline drawn by sampling the probability axis
        svg << "<polyline fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"5,4\" points=\"";
        for (int i = 0; i <= 100; ++i) {
            const double p = st.p_lo + (st.p_hi - st.p_lo) * i / 100.0;
            const double q = fit->baseline(p);
            if (!in_range(q)) continue;
            svg << st.x_px(p) << ',' << st.y_px(q) << ' ';
        }
        svg << "\"/>\n";
    }

    for (const auto& [ar, as] : points) {
        if (!in_range(ar) || !in_range(as)) continue;
        svg << "<circle cx=\"" << st.x_px(ar) << "\" cy=\"" << st.y_px(as)
            << "\" r=\"4\" fill=\"#d62728\"/>\n";
    }

    if (curve != nullptr && !curve->points.empty()) {
        svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        for (const auto& pt : curve->points) {
            if (!in_range(pt.ref.accuracy) || !in_range(pt.avg_shifts)) continue;
            svg << st.x_px(pt.ref.accuracy) << ',' << st.y_px(pt.avg_shifts) << ' ';
        }
        svg << "\"/>\n";
        for (const auto& pt : curve->points) {
            if (!in_range(pt.ref.accuracy) || !in_range(pt.avg_shifts)) continue;
            const double cx = st.x_px(pt.ref.accuracy), cy = st.y_px(pt.avg_shifts);
            // Clopper-Pearson bar on the reference axis
            if (in_range(pt.ref.ci_low) && in_range(pt.ref.ci_high))
                svg << "<line x1=\"" << st.x_px(pt.ref.ci_low) << "\" y1=\"" << cy
                    << "\" x2=\"" << st.x_px(pt.ref.ci_high) << "\" y2=\"" << cy
                    << "\" stroke=\"#1f77b4\" stroke-width=\"0.8\"/>\n";
            svg << "<circle cx=\"" << cx << "\" cy=\"" << cy
                << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
        }
    }

    svg << "</svg>\n";
    return svg.str();
}

namespace {

nlohmann::json run_baselines(const ExperimentConfig& config, const ExperimentData& data,
                             const Checkpoint& theta0, const Dataset& train_data) {
    nlohmann::json out;
    auto eval_point = [&](const Checkpoint& c) {
        nlohmann::json j;
        j["ref"] = eval_to_json(evaluate_checkpoint(config.model, c, data.ref_test));
        double sum = 0.0;
        for (const auto& [name, ds] : data.shifted_tests)
            sum += evaluate_checkpoint(config.model, c, ds).accuracy;
        j["avg_shifts"] =
            data.shifted_tests.empty()
                ? 0.0
                : sum / static_cast<double>(data.shifted_tests.size());
        return j;
    };

    auto run_variant = [&](auto mutate) {
        TrainConfig tc = config.finetune;
        mutate(tc);
        auto [theta, trace] = finetune(config.model, theta0, train_data, tc, &theta0);
        return eval_point(theta);
    };

    for (const auto& name : config.baselines_to_run) {
        if (name == "distill") {
            out[name] = run_variant([](TrainConfig& tc) { tc.distill_alpha = 0.5; });
        } else if (name == "reg_to_init") {
            out[name] = run_variant([](TrainConfig& tc) { tc.reg_to_init = 0.01; });
        } else if (name == "label_smoothing") {
            out[name] = run_variant([](TrainConfig& tc) { tc.label_smoothing = 0.1; });
        } else if (name == "l1") {
            out[name] = run_variant([](TrainConfig& tc) { tc.l1 = 1e-4; });
        } else if (name == "wd") {
            out[name] = run_variant([](TrainConfig& tc) { tc.weight_decay = 0.1; });
        } else if (name == "ema") {
            EmaConfig ec = config.ema.value_or(EmaConfig{});
            EmaState ema(ec.variant, ec.decay, theta0);
            auto [theta, trace] =
                finetune(config.model, theta0, train_data, config.finetune, nullptr, &ema);
            out[name] = eval_point(ema.final());
            out[name]["decay"] = ec.decay;
        } else if (name == "ose_logits" || name == "ose_softmax" || name == "random_interp") {
            auto [theta1, trace] =
                finetune(config.model, theta0, train_data, config.finetune);
            nlohmann::json curve = nlohmann::json::array();
            for (double alpha : config.alpha_grid) {
                std::size_t correct = 0;
                RandomInterpPredictor rip(alpha,
                                          stream_seed("baseline-random-interp",
                                                      config.master_seed));
                for (std::size_t i = 0; i < data.ref_test.rows; ++i) {
                    std::span<const double> x(data.ref_test.row(i), data.ref_test.cols);
                    std::vector<double> scores;
                    if (name == "ose_logits")
                        scores = ose_logits(config.model, theta0, theta1, alpha, x);
                    else if (name == "ose_softmax")
                        scores = ose_softmax(config.model, theta0, theta1, alpha, x);
                    else
                        scores = rip.predict(config.model, theta0, theta1, x);
                    if (predict(scores) == data.ref_test.labels[i]) ++correct;
                }
                curve.push_back({{"alpha", alpha},
                                 {"ref_acc", static_cast<double>(correct) /
                                                 static_cast<double>(data.ref_test.rows)}});
            }
            out[name] = {{"ref_curve", curve}};
        } else {
            throw ConfigError("unknown baseline: " + name);
        }
    }
    return out;
}

}  // namespace

std::filesystem::path run_experiment(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const fs::path out = config.output_dir;
    std::string stage = "setup";
    try {
        fs::create_directories(out / "plots");

        stage = "datagen";
        const ExperimentData data = build_data(config);

        stage = "pretrain";
        const Checkpoint theta0 = build_zero_shot(config, data);
        save(theta0, out / "theta0.ckpt");

        stage = "finetune";
        Dataset train_data = data.ref_train;
        if (config.k_shot)
            train_data = subsample_per_class(train_data, *config.k_shot,
                                             stream_seed("k-shot", config.master_seed));
        std::optional<EmaState> ema;
        if (config.ema) ema.emplace(config.ema->variant, config.ema->decay, theta0);
        auto [theta1, trace] = finetune(config.model, theta0, train_data, config.finetune,
                                        nullptr, ema ? &*ema : nullptr);
        save(theta1, out / "theta1.ckpt");
        trace.write_csv(out / "trace.csv");
        if (ema && ema->step() > 0) save(ema->final(), out / "ema.ckpt");

        stage = "sweep";
        const AlphaSweep sweep = run_sweep(config, data, theta0, theta1);
        emit_sweep_csv(sweep, out / "sweep.csv");
        {
            std::ofstream os(out / "sweep.json", std::ios::trunc);
            os << sweep_to_json(sweep).dump(2) << "\n";
        }

        stage = "diversity";
        {
            std::ofstream os(out / "diversity.json", std::ios::trunc);
            os << diversity_report(config, data, theta0, theta1).dump(2) << "\n";
        }

        stage = "robustness";
        nlohmann::json rob;
        std::vector<std::pair<double, double>> fit_points;
        {
            // The reference-trained family: fine-tuning trajectory snapshots
            // plus the endpoint.
            std::vector<const Checkpoint*> family;
            for (const auto& [s, snap] : trace.snapshots) family.push_back(&snap);
            family.push_back(&theta1);
            for (const Checkpoint* c : family) {
                const EvalResult ref = evaluate_checkpoint(config.model, *c, data.ref_test);
                double sum = 0.0;
                std::size_t pooled_correct = 0, pooled_n = 0;
                for (const auto& [name, ds] : data.shifted_tests) {
                    const EvalResult r = evaluate_checkpoint(config.model, *c, ds);
                    sum += r.accuracy;
                    pooled_correct += r.correct;
                    pooled_n += r.n;
                }
                (void)sum;
                fit_points.emplace_back(clamp_accuracy(ref.correct, ref.n),
                                        clamp_accuracy(pooled_correct, pooled_n));
            }
            nlohmann::json jpts = nlohmann::json::array();
            for (const auto& [ar, as] : fit_points)
                jpts.push_back({{"acc_ref", ar}, {"acc_shift", as}});
            rob["fit_points"] = jpts;
            try {
                const RobustnessFit fit = fit_baseline(fit_points);
                rob["fit"] = {{"slope", fit.slope}, {"intercept", fit.intercept}};
                nlohmann::json rhos = nlohmann::json::array();
                for (const auto& pt : sweep.points) {
                    const double ar = clamp_accuracy(pt.ref.correct, pt.ref.n);
                    rhos.push_back({{"alpha", pt.alpha},
                                    {"rho", effective_robustness(fit, ar, pt.avg_shifts)}});
                }
                rob["rho_per_alpha"] = rhos;
            } catch (const std::exception& e) {
                rob["fit"] = nullptr;
                rob["fit_error"] = e.what();
            }
            std::ofstream os(out / "robustness.json", std::ios::trunc);
            os << rob.dump(2) << "\n";
        }

        if (!config.baselines_to_run.empty()) {
            stage = "baselines";
            std::ofstream os(out / "baselines.json", std::ios::trunc);
            os << run_baselines(config, data, theta0, train_data).dump(2) << "\n";
        }

        stage = "plots";
        {
            const RobustnessFit* fitp = nullptr;
            RobustnessFit fit;
            if (rob.contains("fit") && !rob["fit"].is_null()) {
                fit = fit_baseline(fit_points);
                fitp = &fit;
            }
            std::ofstream os(out / "plots" / "scatter.svg", std::ios::trunc);
            os << render_scatter_svg(fit_points, fitp, &sweep);
        }
        return out;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(out, ec);
        try {
            throw;
        } catch (const ConfigError& e) {
            throw ConfigError("stage '" + stage + "' failed: " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("stage '" + stage + "' failed: " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + stage + "' failed: " + e.what());
        }
    }
}

}  // namespace wiseft
