#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wiseft/datagen.hpp"
#include "wiseft/errors.hpp"
#include "wiseft/prng.hpp"
#include "wiseft/train.hpp"

using namespace wiseft;

namespace {

Dataset tiny_dataset(std::size_t k, std::size_t d, std::size_t per_class,
                     std::uint64_t seed) {
    GenSpec spec;
    spec.k = k;
    spec.d_in = d;
    spec.per_class_train = per_class;
    spec.per_class_test = 1;
    spec.cluster_spread = 1.0;
    spec.mean_scale = 2.0;
    spec.seed = seed;
    return gen_reference(spec).first;
}

ModelSpec small_model(std::size_t d, std::size_t k, bool relu = false,
                      bool normalize = false) {
    ModelSpec s;
    s.layer_widths = relu ? std::vector<std::size_t>{d, d + 2, d} : std::vector<std::size_t>{d, d};
    s.activation = relu ? Activation::Relu : Activation::Identity;
    s.k = k;
    s.normalize_features = normalize;
    return s;
}

}  // namespace

TEST_CASE("smoothed cross entropy limit and symmetry cases") {
    // large margin on the true class drives the loss to zero
    CHECK(loss_ce_smoothed(std::vector<double>{50.0, 0.0, 0.0}, 0, 0.0) ==
          doctest::Approx(0.0).epsilon(1e-10));
    // uniform logits over k classes give ln k
    CHECK(loss_ce_smoothed(std::vector<double>{0.0, 0.0, 0.0, 0.0}, 2, 0.0) ==
          doctest::Approx(std::log(4.0)));
    // smoothing does not change the loss at uniform logits for k=2
    CHECK(loss_ce_smoothed(std::vector<double>{0.0, 0.0}, 0, 0.1) ==
          doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(
        loss_ce_smoothed(std::vector<double>{std::nan(""), 0.0}, 0, 0.0), NumericError);
}

TEST_CASE("distillation loss endpoints") {
    const std::vector<double> teacher = {1.0, -2.0};
    const std::vector<double> student = {0.5, 0.5};
    CHECK(loss_distill(student, teacher, 1, 0.0) ==
          doctest::Approx(loss_ce_smoothed(student, 1, 0.0)));
    // student == teacher at alpha 1: loss equals the teacher softmax entropy
    CHECK(loss_distill(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}, 0,
                       1.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("distillation gradient vanishes when student matches teacher") {
    const std::size_t d = 4, k = 3;
    const auto spec = small_model(d, k);
    auto c = spec.init_checkpoint(3);
    const Dataset batch = tiny_dataset(k, d, 4, 5);

    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    cfg.distill_alpha = 1.0;
    std::vector<double> grad;
    std::vector<std::size_t> idx(batch.rows);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // teacher is the student itself: pure distill gradient must vanish
    batch_loss_and_grad(spec, c, batch, idx, cfg, &c, &c, &grad);
    for (double g : grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("reg-to-init penalty") {
    const auto spec = small_model(3, 2);
    const auto c0 = spec.init_checkpoint(1);
    CHECK(penalty_reg_to_init(c0, c0, 0.5, false) == 0.0);
    auto c = c0;
    c.values[0] += 2.0;
    const double p1 = penalty_reg_to_init(c, c0, 0.5, false);
    CHECK(p1 == doctest::Approx(0.5 * 4.0));
    CHECK(penalty_reg_to_init(c, c0, 1.0, false) == doctest::Approx(2.0 * p1));
    // the perturbed coordinate is in the encoder, outside the head-only scope
    CHECK(penalty_reg_to_init(c, c0, 0.5, true) == 0.0);
}

TEST_CASE("adamw trivial steps") {
    std::vector<double> params = {1.0, -2.0};
    std::vector<double> grads = {0.0, 0.0}, m(2, 0.0), v(2, 0.0);
    adamw_step(params, grads, m, v, 1, 0.1, 0.9, 0.999, 1e-8, 0.0);
    CHECK(params == std::vector<double>{1.0, -2.0});
    adamw_step(params, grads, m, v, 2, 0.1, 0.9, 0.999, 1e-8, 0.5);
    CHECK(params[0] == doctest::Approx(1.0 * 0.95));
    CHECK(params[1] == doctest::Approx(-2.0 * 0.95));
}

TEST_CASE("adamw first step matches hand-derived bias-corrected update") {
    // fresh moments, one step with constant grad g:
    // m_hat = g, v_hat = g^2, delta = -lr * g / (|g| + eps)
    const double g = 0.37, lr = 0.01, eps = 1e-8;
    std::vector<double> params = {2.0};
    std::vector<double> grads = {g}, m(1, 0.0), v(1, 0.0);
    adamw_step(params, grads, m, v, 1, lr, 0.9, 0.999, eps, 0.0);
    CHECK(params[0] == doctest::Approx(2.0 - lr * g / (std::abs(g) + eps)).epsilon(1e-12));
}

TEST_CASE("adamw matches a brute-force re-implementation on random sequences") {
    auto rng = make_stream("adamw-oracle", 8);
    const std::size_t n = 6;
    std::vector<double> p1(n), m1(n, 0.0), v1(n, 0.0);
    for (auto& x : p1) x = rng.next_gaussian();
    auto p2 = p1;
    std::vector<double> m2(n, 0.0), v2(n, 0.0);
    const double lr = 0.003, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t t = 1; t <= 50; ++t) {
        std::vector<double> g(n);
        for (auto& x : g) x = rng.next_gaussian();
        adamw_step(p1, g, m1, v1, t, lr, b1, b2, eps, 0.0);
        // independent unrolled update
        for (std::size_t i = 0; i < n; ++i) {
            m2[i] = b1 * m2[i] + (1 - b1) * g[i];
            v2[i] = b2 * v2[i] + (1 - b2) * g[i] * g[i];
            const double mh = m2[i] / (1 - std::pow(b1, static_cast<double>(t)));
            const double vh = v2[i] / (1 - std::pow(b2, static_cast<double>(t)));
            p2[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(p1[i] - p2[i]) < 1e-12);
    }
}

TEST_CASE("learning rate schedule") {
    CHECK(lr_at(0, 100, 10, 1.0) == 0.0);
    CHECK(lr_at(10, 100, 10, 1.0) == doctest::Approx(1.0));
    CHECK(lr_at(100, 100, 10, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    // halfway through the cosine phase
    CHECK(lr_at(55, 100, 10, 1.0) == doctest::Approx(0.5));
    // continuity at the warmup boundary
    const double before = lr_at(9, 100, 10, 1.0);
    const double at = lr_at(10, 100, 10, 1.0);
    CHECK(at - before < 0.11);
}

TEST_CASE("gradient clipping") {
    std::vector<double> g1 = {0.3, 0.4};
    CHECK(clip_global_norm(g1, 1.0) == doctest::Approx(0.5));
    CHECK(g1 == std::vector<double>{0.3, 0.4});
    std::vector<double> g2 = {1.2, 1.6};  // norm 2
    CHECK(clip_global_norm(g2, 1.0) == doctest::Approx(2.0));
    CHECK(g2[0] == doctest::Approx(0.6));
    CHECK(g2[1] == doctest::Approx(0.8));
    double post = std::sqrt(g2[0] * g2[0] + g2[1] * g2[1]);
    CHECK(post <= 1.0 + 1e-12);
}

TEST_CASE("zero epochs return the initial checkpoint") {
    const auto spec = small_model(4, 2);
    const auto init = spec.init_checkpoint(2);
    const Dataset data = tiny_dataset(2, 4, 8, 6);
    TrainConfig cfg;
    cfg.epochs = 0;
    auto [theta1, trace] = finetune(spec, init, data, cfg);
    CHECK(theta1.values == init.values);
    CHECK(trace.rows.empty());
}

TEST_CASE("linear head mode freezes the encoder exactly") {
    const auto spec = small_model(4, 3, true);
    const auto init = spec.init_checkpoint(4);
    const Dataset data = tiny_dataset(3, 4, 10, 7);
    TrainConfig cfg;
    cfg.mode = TrainMode::LinearHead;
    cfg.epochs = 3;
    cfg.lr_max = 0.05;
    auto [theta1, trace] = finetune(spec, init, data, cfg);
    const std::size_t head_off = init.layout.entry("head").offset;
    for (std::size_t i = 0; i < head_off; ++i)
        CHECK(theta1.values[i] == init.values[i]);
    // and the head did move
    double moved = 0.0;
    for (std::size_t i = head_off; i < init.values.size(); ++i)
        moved += std::abs(theta1.values[i] - init.values[i]);
    CHECK(moved > 0.0);
}

TEST_CASE("finetune is bit-deterministic") {
    const auto spec = small_model(5, 3, true, true);
    const auto init = spec.init_checkpoint(9);
    const Dataset data = tiny_dataset(3, 5, 12, 8);
    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    cfg.epochs = 2;
    cfg.seed = 13;
    auto [a, ta] = finetune(spec, init, data, cfg);
    auto [b, tb] = finetune(spec, init, data, cfg);
    CHECK(a.values == b.values);
    REQUIRE(ta.rows.size() == tb.rows.size());
    for (std::size_t i = 0; i < ta.rows.size(); ++i) {
        CHECK(ta.rows[i].loss == tb.rows[i].loss);
        CHECK(ta.rows[i].grad_norm == tb.rows[i].grad_norm);
    }
}

TEST_CASE("finetune rejects empty data and missing teacher") {
    const auto spec = small_model(4, 2);
    const auto init = spec.init_checkpoint(2);
    Dataset empty;
    empty.cols = 4;
    TrainConfig cfg;
    CHECK_THROWS_AS(finetune(spec, init, empty, cfg), DataError);
    cfg.distill_alpha = 0.5;
    const Dataset data = tiny_dataset(2, 4, 4, 3);
    CHECK_THROWS_AS(finetune(spec, init, data, cfg), ConfigError);
}

TEST_CASE("grad check: linear model with cross entropy") {
    const auto spec = small_model(5, 3);
    const auto c = spec.init_checkpoint(21);
    const Dataset batch = tiny_dataset(3, 5, 4, 22);
    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    CHECK(grad_check(spec, c, batch, cfg) < 1e-6);
}

TEST_CASE("grad check: penalties active") {
    const auto spec = small_model(4, 2);
    auto c = spec.init_checkpoint(31);
    // keep parameters away from zero so the L1 subgradient is smooth locally
    for (auto& v : c.values)
        if (std::abs(v) < 0.05) v += 0.1;
    auto c0 = spec.init_checkpoint(32);
    const Dataset batch = tiny_dataset(2, 4, 4, 33);
    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    cfg.reg_to_init = 0.3;
    cfg.l1 = 0.05;
    cfg.label_smoothing = 0.1;
    CHECK(grad_check(spec, c, batch, cfg, &c0) < 1e-5);
}

TEST_CASE("grad check: relu net with normalization") {
    const auto spec = small_model(4, 3, true, true);
    const auto c = spec.init_checkpoint(41);
    const Dataset batch = tiny_dataset(3, 4, 4, 42);
    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    CHECK(grad_check(spec, c, batch, cfg) < 1e-5);
}

TEST_CASE("grad check: distillation") {
    const auto spec = small_model(4, 3);
    const auto c = spec.init_checkpoint(51);
    const auto teacher = spec.init_checkpoint(52);
    const Dataset batch = tiny_dataset(3, 4, 4, 53);
    TrainConfig cfg;
    cfg.mode = TrainMode::EndToEnd;
    cfg.distill_alpha = 0.7;
    CHECK(grad_check(spec, c, batch, cfg, nullptr, &teacher) < 1e-5);
}
