#include "wiseft/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "wiseft/errors.hpp"

namespace wiseft {

namespace {

std::vector<double> softmax_vec(std::span<const double> z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

}  // namespace

std::vector<double> wse_predict(const ModelSpec& spec, const Checkpoint& theta0,
                                const Checkpoint& theta1, double alpha,
                                std::span<const double> x) {
    const Checkpoint mixed = interpolate(theta0, theta1, alpha);
    return logits(spec, mixed, x);
}

std::vector<double> ose_logits(const ModelSpec& spec, const Checkpoint& theta0,
                               const Checkpoint& theta1, double alpha,
                               std::span<const double> x) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("ose_logits: alpha outside [0,1]");
    const auto f0 = logits(spec, theta0, x);
    const auto f1 = logits(spec, theta1, x);
    std::vector<double> out(f0.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - alpha) * f0[i] + alpha * f1[i];
    return out;
}

std::vector<double> ose_softmax(const ModelSpec& spec, const Checkpoint& theta0,
                                const Checkpoint& theta1, double alpha,
                                std::span<const double> x) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("ose_softmax: alpha outside [0,1]");
    const auto p0 = softmax_vec(logits(spec, theta0, x));
    const auto p1 = softmax_vec(logits(spec, theta1, x));
    std::vector<double> out(p0.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - alpha) * p0[i] + alpha * p1[i];
    return out;
}

RandomInterpPredictor::RandomInterpPredictor(double alpha, std::uint64_t seed)
    : alpha_(alpha), rng_(make_stream("random-interp", seed)) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("random_interp: alpha outside [0,1]");
}

std::vector<double> RandomInterpPredictor::predict(const ModelSpec& spec,
                                                   const Checkpoint& theta0,
                                                   const Checkpoint& theta1,
                                                   std::span<const double> x) {
    const bool pick_finetuned = rng_.next_double() < alpha_;
    return logits(spec, pick_finetuned ? theta1 : theta0, x);
}

double verify_linear_equivalence(const ModelSpec& spec, const Checkpoint& theta0,
                                 const Checkpoint& theta1, std::span<const double> alpha_grid,
                                 const Dataset& eval_data) {
    double worst = 0.0;
    for (double alpha : alpha_grid) {
        const Checkpoint mixed = interpolate(theta0, theta1, alpha);
        for (std::size_t i = 0; i < eval_data.rows; ++i) {
            std::span<const double> x(eval_data.row(i), eval_data.cols);
            const auto wse = logits(spec, mixed, x);
            const auto ose = ose_logits(spec, theta0, theta1, alpha, x);
            for (std::size_t j = 0; j < wse.size(); ++j)
                worst = std::max(worst, std::abs(wse[j] - ose[j]));
        }
    }
    return worst;
}

}  // namespace wiseft
