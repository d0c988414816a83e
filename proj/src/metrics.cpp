#include "wiseft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wiseft/errors.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

namespace {

// log C(n, k) via lgamma.
double log_choose(std::size_t n, std::size_t k) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

// P(X >= c) for X ~ Binomial(n, p), summed in log space per term.
double upper_tail(std::size_t c, std::size_t n, double p) {
    if (p <= 0.0) return c == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return 1.0;
    double sum = 0.0;
    for (std::size_t k = c; k <= n; ++k)
        sum += std::exp(log_choose(n, k) + static_cast<double>(k) * std::log(p) +
                        static_cast<double>(n - k) * std::log1p(-p));
    return sum;
}

double lower_tail(std::size_t c, std::size_t n, double p) {
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return c == n ? 1.0 : 0.0;
    double sum = 0.0;
    for (std::size_t k = 0; k <= c; ++k)
        sum += std::exp(log_choose(n, k) + static_cast<double>(k) * std::log(p) +
                        static_cast<double>(n - k) * std::log1p(-p));
    return sum;
}

std::vector<double> log_softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
}

}  // namespace

std::pair<double, double> clopper_pearson(std::size_t correct, std::size_t n,
                                          double confidence) {
    if (n == 0 || correct > n) throw DomainError("clopper_pearson: invalid counts");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw DomainError("clopper_pearson: confidence must lie in (0,1)");
    const double half_alpha = (1.0 - confidence) / 2.0;
    constexpr double kTol = 1e-10;

    double low = 0.0;
    if (correct > 0) {
        // smallest p with P(X >= correct; p) = alpha/2; tail increases in p
        double lo = 0.0, hi = 1.0;
        while (hi - lo > kTol) {
            const double mid = 0.5 * (lo + hi);
            if (upper_tail(correct, n, mid) < half_alpha)
                lo = mid;
            else
                hi = mid;
        }
        low = 0.5 * (lo + hi);
    }

    double high = 1.0;
    if (correct < n) {
        // largest p with P(X <= correct; p) = alpha/2; tail decreases in p
        double lo = 0.0, hi = 1.0;
        while (hi - lo > kTol) {
            const double mid = 0.5 * (lo + hi);
            if (lower_tail(correct, n, mid) > half_alpha)
                lo = mid;
            else
                hi = mid;
        }
        high = 0.5 * (lo + hi);
    }
    return {low, high};
}

EvalResult make_eval_result(std::string tag, std::size_t correct, std::size_t n) {
    EvalResult r;
    r.tag = std::move(tag);
    r.n = n;
    r.correct = correct;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    std::tie(r.ci_low, r.ci_high) = clopper_pearson(correct, n);
    return r;
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("logit: p must lie in (0,1)");
    return std::log(p / (1.0 - p));
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double RobustnessFit::baseline(double acc_ref) const {
    return sigmoid(slope * logit(acc_ref) + intercept);
}

RobustnessFit fit_baseline(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw DataError("fit_baseline: need at least 2 points");
    std::vector<double> xs, ys;
    for (const auto& [ar, as] : points) {
        if (!(ar > 0.0 && ar < 1.0 && as > 0.0 && as < 1.0))
            throw DomainError(
                "fit_baseline: accuracy at 0 or 1; clamp to [1/(2n), 1-1/(2n)] before "
                "fitting");
        xs.push_back(logit(ar));
        ys.push_back(logit(as));
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0 || !std::isfinite(denom))
        throw DataError("fit_baseline: degenerate fit (all reference accuracies equal)");

    RobustnessFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.points.assign(points.begin(), points.end());
    for (std::size_t i = 0; i < xs.size(); ++i)
        fit.residuals.push_back(ys[i] - (fit.slope * xs[i] + fit.intercept));
    return fit;
}

double effective_robustness(const RobustnessFit& fit, double acc_ref, double acc_shift) {
    return acc_shift - fit.baseline(acc_ref);
}

double prediction_diversity(std::span<const int> preds_f, std::span<const int> preds_g,
                            std::span<const int> labels) {
    if (preds_f.size() != preds_g.size() || preds_f.size() != labels.size())
        throw StructuralError("prediction_diversity: length mismatch");
    if (preds_f.empty()) throw DataError("prediction_diversity: empty input");
    std::size_t count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool f_ok = preds_f[i] == labels[i];
        const bool g_ok = preds_g[i] == labels[i];
        if (f_ok != g_ok) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(labels.size());
}

std::optional<double> cohens_kappa_complement(std::span<const int> preds_f,
                                              std::span<const int> preds_g, std::size_t k) {
    if (preds_f.size() != preds_g.size())
        throw StructuralError("cohens_kappa_complement: length mismatch");
    if (preds_f.empty()) throw DataError("cohens_kappa_complement: empty input");
    const double n = static_cast<double>(preds_f.size());
    std::vector<double> nf(k, 0.0), ng(k, 0.0);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < preds_f.size(); ++i) {
        nf[static_cast<std::size_t>(preds_f[i])] += 1.0;
        ng[static_cast<std::size_t>(preds_g[i])] += 1.0;
        if (preds_f[i] == preds_g[i]) ++agree;
    }
    double pe = 0.0;
    for (std::size_t c = 0; c < k; ++c) pe += nf[c] * ng[c];
    pe /= n * n;
    if (pe >= 1.0) return std::nullopt;
    const double po = static_cast<double>(agree) / n;
    return (1.0 - po) / (1.0 - pe);
}

double mean_kl(const std::vector<std::vector<double>>& logits_f,
               const std::vector<std::vector<double>>& logits_g) {
    if (logits_f.size() != logits_g.size()) throw StructuralError("mean_kl: length mismatch");
    if (logits_f.empty()) throw DataError("mean_kl: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < logits_f.size(); ++i) {
        const auto lf = log_softmax(logits_f[i]);
        const auto lg = log_softmax(logits_g[i]);
        double kl = 0.0;
        for (std::size_t c = 0; c < lf.size(); ++c) kl += std::exp(lf[c]) * (lf[c] - lg[c]);
        total += kl;
    }
    return total / static_cast<double>(logits_f.size());
}

namespace {

// ||A^T B||_F^2 for row-major N x da, N x db matrices.
double cross_gram_sq(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
    const std::size_t da = a[0].size(), db = b[0].size();
    double sum = 0.0;
    for (std::size_t i = 0; i < da; ++i)
        for (std::size_t j = 0; j < db; ++j) {
            double dot = 0.0;
            for (std::size_t r = 0; r < a.size(); ++r) dot += a[r][i] * b[r][j];
            sum += dot * dot;
        }
    return sum;
}

}  // namespace

std::optional<double> ckac(const std::vector<std::vector<double>>& features_f,
                           const std::vector<std::vector<double>>& features_g,
                           std::size_t row_cap, std::uint64_t seed) {
    if (features_f.size() != features_g.size())
        throw StructuralError("ckac: row count mismatch");
    if (features_f.size() < 2) throw DataError("ckac: need at least 2 rows");

    std::vector<std::size_t> rows(features_f.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (rows.size() > row_cap) {
        auto rng = make_stream("ckac-subsample", seed);
        for (std::size_t i = 0; i < row_cap; ++i) {
            const std::size_t j = i + rng.next_below(rows.size() - i);
            std::swap(rows[i], rows[j]);
        }
        rows.resize(row_cap);
    }

    auto center = [&rows](const std::vector<std::vector<double>>& feats) {
        const std::size_t d = feats[0].size();
        std::vector<double> mean(d, 0.0);
        for (std::size_t r : rows)
            for (std::size_t j = 0; j < d; ++j) mean[j] += feats[r][j];
        for (double& v : mean) v /= static_cast<double>(rows.size());
        std::vector<std::vector<double>> out(rows.size(), std::vector<double>(d));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) out[i][j] = feats[rows[i]][j] - mean[j];
        return out;
    };

    const auto sf = center(features_f);
    const auto sg = center(features_g);
    const double ff = std::sqrt(cross_gram_sq(sf, sf));
    const double gg = std::sqrt(cross_gram_sq(sg, sg));
    if (ff == 0.0 || gg == 0.0) return std::nullopt;
    const double cka = cross_gram_sq(sg, sf) / (ff * gg);
    return 1.0 - cka;
}

OverrideFractions override_analysis(std::span<const int> preds_zero,
                                    std::span<const int> preds_ft,
                                    std::span<const int> preds_ensemble,
                                    bool over_disagreements_only) {
    if (preds_zero.size() != preds_ft.size() || preds_zero.size() != preds_ensemble.size())
        throw StructuralError("override_analysis: length mismatch");
    if (preds_zero.empty()) throw DataError("override_analysis: empty input");
    std::size_t overrides = 0, overridden = 0, neither = 0, disagreements = 0;
    for (std::size_t i = 0; i < preds_zero.size(); ++i) {
        if (preds_zero[i] == preds_ft[i]) continue;
        ++disagreements;
        if (preds_ensemble[i] == preds_zero[i])
            ++overrides;
        else if (preds_ensemble[i] == preds_ft[i])
            ++overridden;
        else
            ++neither;
    }
    const double denom = over_disagreements_only
                             ? static_cast<double>(std::max<std::size_t>(disagreements, 1))
                             : static_cast<double>(preds_zero.size());
    return {static_cast<double>(overrides) / denom, static_cast<double>(overridden) / denom,
            static_cast<double>(neither) / denom};
}

double margin_stats(const std::vector<std::vector<double>>& logit_rows) {
    if (logit_rows.empty()) throw DataError("margin_stats: empty input");
    double total = 0.0;
    for (const auto& row : logit_rows) {
        if (row.size() < 2) throw DomainError("margin_stats: requires k >= 2");
        double top = -std::numeric_limits<double>::infinity(), second = top;
        for (double v : row) {
            if (v > top) {
                second = top;
                top = v;
            } else if (v > second) {
                second = v;
            }
        }
        total += top - second;
    }
    return total / static_cast<double>(logit_rows.size());
}

Observation1Result observation1_check(
    std::span<const std::pair<double, double>> alpha_accs, double acc0, double acc1) {
    if (alpha_accs.empty()) throw DataError("observation1_check: empty sweep");
    Observation1Result r;
    r.worst_violation = std::numeric_limits<double>::infinity();
    const double best_endpoint = std::max(acc0, acc1);
    r.best_acc = -1.0;
    for (const auto& [alpha, acc] : alpha_accs) {
        const double chord = (1.0 - alpha) * acc0 + alpha * acc1;
        r.worst_violation = std::min(r.worst_violation, acc - chord);
        if (acc > r.best_acc) {
            r.best_acc = acc;
            r.best_alpha = alpha;
        }
        if (acc >= best_endpoint) r.obs2_holds = true;
    }
    return r;
}

}  // namespace wiseft
