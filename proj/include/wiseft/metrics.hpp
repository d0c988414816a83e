#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wiseft {

struct EvalResult {
    std::string tag;
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
};

EvalResult make_eval_result(std::string tag, std::size_t correct, std::size_t n);

// Exact binomial interval via bisection on log-space tail sums.
// (0, n) pins the lower bound at 0; (n, n) pins the upper at 1.
std::pair<double, double> clopper_pearson(std::size_t correct, std::size_t n,
                                          double confidence = 0.95);

double logit(double p);
double sigmoid(double t);

/// OLS line through (logit(acc_ref), logit(acc_shift)) pairs; the baseline
/// beta(p) = sigmoid(a * logit(p) + b).
struct RobustnessFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<std::pair<double, double>> points;  // accuracy space
    std::vector<double> residuals;                  // logit space

    double baseline(double acc_ref) const;
};

RobustnessFit fit_baseline(std::span<const std::pair<double, double>> points);

// rho = acc_shift - beta(acc_ref).
double effective_robustness(const RobustnessFit& fit, double acc_ref, double acc_shift);

// Fraction of samples where the two classifiers disagree and exactly one
// is correct.
double prediction_diversity(std::span<const int> preds_f, std::span<const int> preds_g,
                            std::span<const int> labels);

// (1 - p_o) / (1 - p_e); nullopt when p_e = 1 (both classifiers constant
// on the same class).
std::optional<double> cohens_kappa_complement(std::span<const int> preds_f,
                                              std::span<const int> preds_g, std::size_t k);

// Mean over samples of KL(softmax(f) || softmax(g)).
double mean_kl(const std::vector<std::vector<double>>& logits_f,
               const std::vector<std::vector<double>>& logits_g);

// 1 - ||S_g^T S_f||_F^2 / (||S_f^T S_f||_F ||S_g^T S_g||_F) on column-
// centered features; rows subsampled to a cap with a seeded stream.
// nullopt when a centered matrix vanishes.
std::optional<double> ckac(const std::vector<std::vector<double>>& features_f,
                           const std::vector<std::vector<double>>& features_g,
                           std::size_t row_cap = 10000, std::uint64_t seed = 0);

struct OverrideFractions {
    double overrides = 0.0;   // disagreement where the ensemble sides with zero-shot
    double overridden = 0.0;  // disagreement where the ensemble sides with fine-tuned
    double neither = 0.0;     // disagreement where the ensemble matches neither
};

// Fractions over all samples; set over_disagreements_only to divide by the
// disagreement count instead.
OverrideFractions override_analysis(std::span<const int> preds_zero,
                                    std::span<const int> preds_ft,
                                    std::span<const int> preds_ensemble,
                                    bool over_disagreements_only = false);

// Mean of (largest - second largest) over logit rows.
double margin_stats(const std::vector<std::vector<double>>& logit_rows);

struct Observation1Result {
    double worst_violation = 0.0;  // min over grid of acc(a) - chord(a); negative = violation
    bool obs2_holds = false;       // some alpha reaches max(acc0, acc1)
    double best_alpha = 0.0;
    double best_acc = 0.0;
};

Observation1Result observation1_check(
    std::span<const std::pair<double, double>> alpha_accs, double acc0, double acc1);

}  // namespace wiseft
