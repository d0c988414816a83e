#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wiseft/checkpoint.hpp"
#include "wiseft/dataset.hpp"
#include "wiseft/model.hpp"

namespace wiseft {

enum class TrainMode { EndToEnd, LinearHead };

struct TrainConfig {
    TrainMode mode = TrainMode::LinearHead;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double lr_max = 1e-3;
    std::size_t warmup_steps = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;     // decoupled, applied inside the optimizer
    double l1 = 0.0;               // subgradient penalty on trainable params
    double label_smoothing = 0.0;  // in [0, 0.25]
    double reg_to_init = 0.0;      // lambda * ||theta - theta0||^2
    double distill_alpha = 0.0;    // in [0, 1]; requires a teacher when > 0
    double grad_clip_norm = 1.0;   // 0 disables clipping
    std::size_t snapshot_every = 0;  // 0: no trajectory snapshots
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceRow {
    std::size_t step;
    double loss;
    double lr;
    double grad_norm;  // global norm before clipping
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    std::vector<std::pair<std::size_t, Checkpoint>> snapshots;

    void write_csv(const std::filesystem::path& path) const;
};

// Cross-entropy against a label-smoothed target, log-sum-exp stable.
double loss_ce_smoothed(std::span<const double> logits, int label, double smoothing);

// (1 - a) * CE(student, label) + a * CE(student, softmax(teacher)).
double loss_distill(std::span<const double> student_logits,
                    std::span<const double> teacher_logits, int label, double distill_alpha);

// lambda * ||c - c0||^2; head-only when head_only is set.
double penalty_reg_to_init(const Checkpoint& c, const Checkpoint& c0, double lambda,
                           bool head_only);

// Decoupled-weight-decay AdamW with bias-corrected moments. step is 1-based.
void adamw_step(std::span<double> params, std::span<const double> grads,
                std::span<double> m, std::span<double> v, std::size_t step, double lr,
                double beta1, double beta2, double eps, double weight_decay);

// Linear warmup to lr_max, then cosine anneal to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
             double lr_max);

// Scales grads so the global l2 norm does not exceed max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::span<double> grads, double max_norm);

// Total objective (data loss + penalties) and its gradient over a batch.
// theta0 is the regularization anchor; teacher provides soft targets.
// In linear-head mode encoder gradients are forced to zero.
double batch_loss_and_grad(const ModelSpec& spec, const Checkpoint& c, const Dataset& data,
                           std::span<const std::size_t> batch_indices,
                           const TrainConfig& config, const Checkpoint* theta0,
                           const Checkpoint* teacher, std::vector<double>* grad_out);

// Fine-tunes theta_init on train_data. Deterministic in the config seed.
// ema, when given, is updated after every optimizer step.
std::pair<Checkpoint, TrainTrace> finetune(const ModelSpec& spec, const Checkpoint& theta_init,
                                           const Dataset& train_data, const TrainConfig& config,
                                           const Checkpoint* teacher = nullptr,
                                           EmaState* ema = nullptr);

// Max relative error between analytic and central finite-difference
// gradients over sampled coordinates.
double grad_check(const ModelSpec& spec, const Checkpoint& c, const Dataset& batch,
                  const TrainConfig& config, const Checkpoint* theta0 = nullptr,
                  const Checkpoint* teacher = nullptr, std::size_t coord_samples = 60);

}  // namespace wiseft
