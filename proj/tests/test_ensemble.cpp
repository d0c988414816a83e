#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "wiseft/datagen.hpp"
#include "wiseft/ensemble.hpp"
#include "wiseft/errors.hpp"
#include "wiseft/prng.hpp"

using namespace wiseft;

namespace {

ModelSpec linear_spec(std::size_t d, std::size_t k) {
    ModelSpec s;
    s.layer_widths = {d};  // no encoder: logits are linear in the parameters
    s.activation = Activation::Identity;
    s.k = k;
    return s;
}

Dataset random_inputs(std::size_t n, std::size_t d, std::uint64_t seed) {
    Dataset data;
    data.rows = n;
    data.cols = d;
    data.features.resize(n * d);
    data.labels.assign(n, 0);
    auto rng = make_stream("ens-inputs", seed);
    for (auto& v : data.features) v = rng.next_gaussian();
    return data;
}

}  // namespace

TEST_CASE("wse endpoints equal the constituent models") {
    const auto spec = linear_spec(4, 3);
    const auto t0 = spec.init_checkpoint(1);
    const auto t1 = spec.init_checkpoint(2);
    const std::vector<double> x = {0.3, -0.7, 1.1, 0.2};
    CHECK(wse_predict(spec, t0, t1, 0.0, x) == logits(spec, t0, x));
    CHECK(wse_predict(spec, t0, t1, 1.0, x) == logits(spec, t1, x));
}

TEST_CASE("wse of a model with itself is independent of alpha") {
    const auto spec = linear_spec(4, 3);
    const auto t = spec.init_checkpoint(3);
    const std::vector<double> x = {1.0, 0.5, -0.5, 2.0};
    const auto base = logits(spec, t, x);
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto z = wse_predict(spec, t, t, a, x);
        for (std::size_t j = 0; j < z.size(); ++j)
            CHECK(z[j] == doctest::Approx(base[j]).epsilon(1e-14));
    }
}

TEST_CASE("ose logits hand case") {
    const auto spec = linear_spec(2, 2);
    auto t0 = spec.init_checkpoint(4);
    auto t1 = spec.init_checkpoint(5);
    const std::vector<double> x = {1.0, -1.0};
    const auto f0 = logits(spec, t0, x);
    const auto f1 = logits(spec, t1, x);
    const auto mix = ose_logits(spec, t0, t1, 0.25, x);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(mix[j] == doctest::Approx(0.75 * f0[j] + 0.25 * f1[j]));
}

TEST_CASE("ose softmax stays on the simplex") {
    const auto spec = linear_spec(3, 4);
    const auto t0 = spec.init_checkpoint(6);
    const auto t1 = spec.init_checkpoint(7);
    auto rng = make_stream("simplex", 8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(3);
        for (auto& v : x) v = rng.next_gaussian() * 3.0;
        const double alpha = rng.next_double();
        const auto p = ose_softmax(spec, t0, t1, alpha, x);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("random interpolation endpoints and empirical frequency") {
    const auto spec = linear_spec(2, 2);
    auto t0 = spec.init_checkpoint(9);
    auto t1 = spec.init_checkpoint(10);
    const std::vector<double> x = {1.0, 2.0};
    const auto f0 = logits(spec, t0, x);
    const auto f1 = logits(spec, t1, x);

    RandomInterpPredictor always0(0.0, 1);
    RandomInterpPredictor always1(1.0, 1);
    for (int i = 0; i < 10; ++i) {
        CHECK(always0.predict(spec, t0, t1, x) == f0);
        CHECK(always1.predict(spec, t0, t1, x) == f1);
    }

    const double alpha = 0.3;
    const std::size_t n = 100000;
    RandomInterpPredictor rip(alpha, 12);
    std::size_t picked1 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (rip.predict(spec, t0, t1, x) == f1) ++picked1;
    const double freq = static_cast<double>(picked1) / static_cast<double>(n);
    const double sigma = std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(n));
    CHECK(std::abs(freq - alpha) < 3.0 * sigma);
}

TEST_CASE("linear model: weight and output ensembles coincide") {
    const auto spec = linear_spec(5, 3);
    const auto t0 = spec.init_checkpoint(13);
    const auto t1 = spec.init_checkpoint(14);
    const Dataset data = random_inputs(50, 5, 15);
    const std::vector<double> grid = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
    CHECK(verify_linear_equivalence(spec, t0, t1, grid, data) < 1e-9);
}

TEST_CASE("shared encoder, differing heads: equivalence holds even with relu") {
    ModelSpec spec;
    spec.layer_widths = {4, 6, 4};
    spec.activation = Activation::Relu;
    spec.k = 3;
    spec.normalize_features = true;
    const auto t0 = spec.init_checkpoint(16);
    auto t1 = t0;
    auto rng = make_stream("head-perturb", 17);
    double* head = t1.param("head");
    for (std::size_t i = 0; i < 4 * 3; ++i) head[i] += rng.next_gaussian();
    const Dataset data = random_inputs(100, 4, 18);
    const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    CHECK(verify_linear_equivalence(spec, t0, t1, grid, data) < 1e-9);
}

TEST_CASE("relu model with distinct weights shows a discrepancy somewhere") {
    ModelSpec spec;
    spec.layer_widths = {3, 5, 3};
    spec.activation = Activation::Relu;
    spec.k = 2;
    const auto t0 = spec.init_checkpoint(19);
    const auto t1 = spec.init_checkpoint(20);
    // search random inputs for an activation-pattern flip along the path
    const std::vector<double> grid = {0.5};
    double best = 0.0;
    for (std::uint64_t s = 0; s < 20 && best <= 1e-3; ++s) {
        const Dataset data = random_inputs(200, 3, 100 + s);
        best = std::max(best, verify_linear_equivalence(spec, t0, t1, grid, data));
    }
    CHECK(best > 1e-3);
}

TEST_CASE("ose argmax at alpha 0.5 equals argmax of the logit sum") {
    const auto spec = linear_spec(4, 5);
    const auto t0 = spec.init_checkpoint(21);
    const auto t1 = spec.init_checkpoint(22);
    const Dataset data = random_inputs(50, 4, 23);
    for (std::size_t i = 0; i < data.rows; ++i) {
        std::span<const double> x(data.row(i), data.cols);
        const auto half = ose_logits(spec, t0, t1, 0.5, x);
        auto sum = logits(spec, t0, x);
        const auto f1 = logits(spec, t1, x);
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += f1[j];
        CHECK(predict(half) == predict(sum));
    }
}
