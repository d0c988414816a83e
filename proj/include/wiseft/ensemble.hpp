#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wiseft/checkpoint.hpp"
#include "wiseft/dataset.hpp"
#include "wiseft/model.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

// Logits of the weight-space ensemble f(x, (1-a) theta0 + a theta1).
std::vector<double> wse_predict(const ModelSpec& spec, const Checkpoint& theta0,
                                const Checkpoint& theta1, double alpha,
                                std::span<const double> x);

// (1-a) f(x, theta0) + a f(x, theta1) on pre-softmax scores.
std::vector<double> ose_logits(const ModelSpec& spec, const Checkpoint& theta0,
                               const Checkpoint& theta1, double alpha,
                               std::span<const double> x);

// (1-a) softmax(f0) + a softmax(f1); a probability vector.
std::vector<double> ose_softmax(const ModelSpec& spec, const Checkpoint& theta0,
                                const Checkpoint& theta1, double alpha,
                                std::span<const double> x);

/// Per-sample Bernoulli(alpha) pick between the two models from a seeded
/// stream; successive calls advance the stream.
class RandomInterpPredictor {
  public:
    RandomInterpPredictor(double alpha, std::uint64_t seed);
    std::vector<double> predict(const ModelSpec& spec, const Checkpoint& theta0,
                                const Checkpoint& theta1, std::span<const double> x);

  private:
    double alpha_;
    Xoshiro256 rng_;
};

// Max |wse - ose| over all samples and grid points; zero (to rounding) when
// the model is linear along the interpolation path.
double verify_linear_equivalence(const ModelSpec& spec, const Checkpoint& theta0,
                                 const Checkpoint& theta1, std::span<const double> alpha_grid,
                                 const Dataset& eval_data);

}  // namespace wiseft
