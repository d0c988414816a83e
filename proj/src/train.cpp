#include "wiseft/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wiseft/errors.hpp"
#include "wiseft/format.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

void TrainConfig::validate() const {
    if (!(lr_max > 0.0)) throw ConfigError("train config: lr_max must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("train config: betas must lie in (0,1)");
    if (!(label_smoothing >= 0.0 && label_smoothing <= 0.25))
        throw ConfigError("train config: label_smoothing must lie in [0,0.25]");
    if (!(distill_alpha >= 0.0 && distill_alpha <= 1.0))
        throw ConfigError("train config: distill_alpha must lie in [0,1]");
    if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
    if (weight_decay < 0.0 || l1 < 0.0 || reg_to_init < 0.0 || grad_clip_norm < 0.0)
        throw ConfigError("train config: penalties must be non-negative");
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw CodecError("cannot open for writing: " + path.string());
    os << "step,loss,lr,grad_norm\n";
    for (const auto& r : rows)
        os << r.step << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ','
           << format_double(r.grad_norm) << "\n";
}

namespace {

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

double log_sum_exp(std::span<const double> z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> z) {
    const double lse = log_sum_exp(z);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse);
    return p;
}

}  // namespace

double loss_ce_smoothed(std::span<const double> logits, int label, double smoothing) {
    if (!(smoothing >= 0.0 && smoothing < 1.0))
        throw DomainError("loss_ce_smoothed: smoothing must lie in [0,1)");
    check_finite(logits, "loss_ce_smoothed");
    const std::size_t k = logits.size();
    const double lse = log_sum_exp(logits);
    double target_dot = 0.0;
    const double off = k > 1 ? smoothing / static_cast<double>(k - 1) : 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double t = (static_cast<int>(c) == label) ? 1.0 - smoothing : off;
        target_dot += t * logits[c];
    }
    return lse - target_dot;
}

double loss_distill(std::span<const double> student_logits,
                    std::span<const double> teacher_logits, int label, double distill_alpha) {
    if (!(distill_alpha >= 0.0 && distill_alpha <= 1.0))
        throw DomainError("loss_distill: distill_alpha must lie in [0,1]");
    check_finite(student_logits, "loss_distill");
    check_finite(teacher_logits, "loss_distill");
    const double hard = loss_ce_smoothed(student_logits, label, 0.0);
    const auto q = softmax(teacher_logits);
    const double lse = log_sum_exp(student_logits);
    double soft = lse;
    for (std::size_t c = 0; c < q.size(); ++c) soft -= q[c] * student_logits[c];
    return (1.0 - distill_alpha) * hard + distill_alpha * soft;
}

double penalty_reg_to_init(const Checkpoint& c, const Checkpoint& c0, double lambda,
                           bool head_only) {
    if (!(c.layout == c0.layout))
        throw StructuralError("penalty_reg_to_init: layouts differ");
    std::size_t begin = 0, end = c.values.size();
    if (head_only) begin = c.layout.entry("head").offset;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        const double d = c.values[i] - c0.values[i];
        sum += d * d;
    }
    return lambda * sum;
}

void adamw_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                std::span<double> v, std::size_t step, double lr, double beta1, double beta2,
                double eps, double weight_decay) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
        throw StructuralError("adamw_step: length mismatch");
    check_finite(grads, "adamw_step");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] *= 1.0 - lr * weight_decay;
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
             double lr_max) {
    if (step < warmup_steps)
        return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return 0.0;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return lr_max * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(progress, 1.0)));
}

double clip_global_norm(std::span<double> grads, double max_norm) {
    double norm_sq = 0.0;
    for (double g : grads) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
    return norm;
}

namespace {

// Forward pass keeping per-layer inputs and pre-activations for backprop.
struct ForwardCache {
    std::vector<std::vector<double>> layer_inputs;  // input to each encoder layer
    std::vector<std::vector<double>> pre_acts;      // affine outputs per layer
    std::vector<double> embedding;                  // post-normalization
    double raw_norm = 0.0;                          // pre-normalization l2 norm
    std::vector<double> logit_row;
};

ForwardCache forward_cached(const ModelSpec& spec, const Checkpoint& c,
                            std::span<const double> x) {
    ForwardCache fc;
    std::vector<double> h(x.begin(), x.end());
    const std::size_t L = spec.encoder_layers();
    for (std::size_t l = 0; l < L; ++l) {
        fc.layer_inputs.push_back(h);
        const std::size_t in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
        const double* w = c.param("enc." + std::to_string(l) + ".w");
        const double* b = c.param("enc." + std::to_string(l) + ".b");
        std::vector<double> pre(out);
        for (std::size_t i = 0; i < out; ++i) {
            double acc = b[i];
            const double* wrow = w + i * in;
            for (std::size_t j = 0; j < in; ++j) acc += wrow[j] * h[j];
            pre[i] = acc;
        }
        fc.pre_acts.push_back(pre);
        h = pre;
        if (l + 1 < L && spec.activation == Activation::Relu)
            for (double& v : h) v = v > 0.0 ? v : 0.0;
    }
    if (spec.normalize_features) {
        fc.raw_norm = std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));
        if (fc.raw_norm > 0.0)
            for (double& v : h) v /= fc.raw_norm;
    }
    fc.embedding = h;

    const double* head = c.param("head");
    const std::size_t d = spec.d_embed(), k = spec.k;
    fc.logit_row.assign(k, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double e = fc.embedding[i];
        for (std::size_t j = 0; j < k; ++j) fc.logit_row[j] += e * head[i * k + j];
    }
    return fc;
}

// Accumulates parameter gradients for one sample given dL/dlogits.
void backward(const ModelSpec& spec, const Checkpoint& c, const ForwardCache& fc,
              std::span<const double> dlogits, std::vector<double>& grad) {
    const std::size_t d = spec.d_embed(), k = spec.k;
    const double* head = c.param("head");
    const std::size_t head_off = c.layout.entry("head").offset;

    std::vector<double> demb(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double e = fc.embedding[i];
        for (std::size_t j = 0; j < k; ++j) {
            grad[head_off + i * k + j] += e * dlogits[j];
            demb[i] += head[i * k + j] * dlogits[j];
        }
    }

    std::vector<double> dh = std::move(demb);
    if (spec.normalize_features) {
        if (fc.raw_norm == 0.0) {
            std::fill(dh.begin(), dh.end(), 0.0);
        } else {
            // y = h/||h||;  dL/dh = (dL/dy - (dL/dy . y) y) / ||h||
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += dh[i] * fc.embedding[i];
            for (std::size_t i = 0; i < d; ++i)
                dh[i] = (dh[i] - dot * fc.embedding[i]) / fc.raw_norm;
        }
    }

    const std::size_t L = spec.encoder_layers();
    for (std::size_t li = L; li-- > 0;) {
        const std::size_t in = spec.layer_widths[li], out = spec.layer_widths[li + 1];
        std::vector<double> dpre = dh;
        if (li + 1 < L && spec.activation == Activation::Relu)
            for (std::size_t i = 0; i < out; ++i)
                if (fc.pre_acts[li][i] <= 0.0) dpre[i] = 0.0;

        const std::string prefix = "enc." + std::to_string(li);
        const std::size_t w_off = c.layout.entry(prefix + ".w").offset;
        const std::size_t b_off = c.layout.entry(prefix + ".b").offset;
        const double* w = c.values.data() + w_off;
        const auto& input = fc.layer_inputs[li];

        std::vector<double> dinput(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            grad[b_off + i] += dpre[i];
            const double* wrow = w + i * in;
            double* grow = grad.data() + w_off + i * in;
            for (std::size_t j = 0; j < in; ++j) {
                grow[j] += dpre[i] * input[j];
                dinput[j] += wrow[j] * dpre[i];
            }
        }
        dh = std::move(dinput);
    }
}

}  // namespace

double batch_loss_and_grad(const ModelSpec& spec, const Checkpoint& c, const Dataset& data,
                           std::span<const std::size_t> batch_indices,
                           const TrainConfig& config, const Checkpoint* theta0,
                           const Checkpoint* teacher, std::vector<double>* grad_out) {
    if (batch_indices.empty()) throw DataError("batch_loss_and_grad: empty batch");
    if (config.distill_alpha > 0.0 && teacher == nullptr)
        throw ConfigError("distill_alpha > 0 requires a teacher checkpoint");
    if (config.reg_to_init > 0.0 && theta0 == nullptr)
        throw ConfigError("reg_to_init > 0 requires the init checkpoint");

    if (grad_out) grad_out->assign(c.values.size(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch_indices.size());
    const std::size_t k = spec.k;
    double loss = 0.0;

    for (std::size_t idx : batch_indices) {
        std::span<const double> x(data.row(idx), data.cols);
        const int label = data.labels[idx];
        const ForwardCache fc = forward_cached(spec, c, x);
        const auto p = softmax(fc.logit_row);

        std::vector<double> target(k, 0.0);
        if (config.distill_alpha > 0.0) {
            const auto teacher_logits = logits(spec, *teacher, x);
            loss += inv_b * loss_distill(fc.logit_row, teacher_logits, label,
                                         config.distill_alpha);
            const auto q = softmax(teacher_logits);
            for (std::size_t cc = 0; cc < k; ++cc) target[cc] = config.distill_alpha * q[cc];
            target[static_cast<std::size_t>(label)] += 1.0 - config.distill_alpha;
        } else {
            loss += inv_b * loss_ce_smoothed(fc.logit_row, label, config.label_smoothing);
            const double off =
                k > 1 ? config.label_smoothing / static_cast<double>(k - 1) : 0.0;
            for (std::size_t cc = 0; cc < k; ++cc)
                target[cc] = (static_cast<int>(cc) == label) ? 1.0 - config.label_smoothing
                                                             : off;
        }
        if (grad_out) {
            std::vector<double> dlogits(k);
            for (std::size_t cc = 0; cc < k; ++cc) dlogits[cc] = inv_b * (p[cc] - target[cc]);
            backward(spec, c, fc, dlogits, *grad_out);
        }
    }

    // Penalties apply to the trainable subset only.
    const bool head_only = config.mode == TrainMode::LinearHead;
    const std::size_t begin = head_only ? c.layout.entry("head").offset : 0;
    if (config.reg_to_init > 0.0) {
        loss += penalty_reg_to_init(c, *theta0, config.reg_to_init, head_only);
        if (grad_out)
            for (std::size_t i = begin; i < c.values.size(); ++i)
                (*grad_out)[i] += 2.0 * config.reg_to_init * (c.values[i] - theta0->values[i]);
    }
    if (config.l1 > 0.0) {
        for (std::size_t i = begin; i < c.values.size(); ++i)
            loss += config.l1 * std::abs(c.values[i]);
        if (grad_out)
            for (std::size_t i = begin; i < c.values.size(); ++i) {
                const double v = c.values[i];
                (*grad_out)[i] += config.l1 * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
            }
    }

    if (grad_out && head_only)
        std::fill(grad_out->begin(), grad_out->begin() + static_cast<std::ptrdiff_t>(begin),
                  0.0);
    return loss;
}

std::pair<Checkpoint, TrainTrace> finetune(const ModelSpec& spec, const Checkpoint& theta_init,
                                           const Dataset& train_data, const TrainConfig& config,
                                           const Checkpoint* teacher, EmaState* ema) {
    config.validate();
    if (train_data.rows == 0) throw DataError("finetune: empty training data");
    if (!(theta_init.layout == spec.layout()))
        throw StructuralError("finetune: checkpoint layout does not match model spec");
    if (config.distill_alpha > 0.0 && teacher == nullptr)
        throw ConfigError("finetune: distill_alpha > 0 requires a teacher");

    Checkpoint theta = theta_init;
    const std::size_t n = train_data.rows;
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * steps_per_epoch;

    const std::size_t train_begin =
        config.mode == TrainMode::LinearHead ? theta.layout.entry("head").offset : 0;
    const std::size_t train_len = theta.values.size() - train_begin;

    std::vector<double> grad, m(train_len, 0.0), v(train_len, 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_stream("batch-shuffle", config.seed);

    TrainTrace trace;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::size_t j = i + shuffle_rng.next_below(n - i);
            std::swap(order[i], order[j]);
        }
        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(lo + config.batch_size, n);
            const double loss =
                batch_loss_and_grad(spec, theta, train_data,
                                    std::span(order).subspan(lo, hi - lo), config,
                                    &theta_init, teacher, &grad);
            if (!std::isfinite(loss))
                throw NumericError("finetune: non-finite loss at step " + std::to_string(step));

            std::span<double> g(grad.data() + train_begin, train_len);
            const double norm = clip_global_norm(g, config.grad_clip_norm);
            const double lr = lr_at(step, total_steps, config.warmup_steps, config.lr_max);
            adamw_step(std::span(theta.values.data() + train_begin, train_len), g, m, v,
                       step + 1, lr, config.beta1, config.beta2, config.eps,
                       config.weight_decay);

            trace.rows.push_back({step, loss, lr, norm});
            if (ema) ema->update(theta);
            if (config.snapshot_every > 0 && (step + 1) % config.snapshot_every == 0) {
                Checkpoint snap = theta;
                snap.meta.seed = config.seed;
                snap.meta.step = step + 1;
                snap.meta.tag = "trajectory";
                trace.snapshots.emplace_back(step + 1, std::move(snap));
            }
        }
    }

    theta.meta.seed = config.seed;
    theta.meta.step = total_steps;
    theta.meta.tag = "finetuned";
    return {std::move(theta), std::move(trace)};
}

double grad_check(const ModelSpec& spec, const Checkpoint& c, const Dataset& batch,
                  const TrainConfig& config, const Checkpoint* theta0,
                  const Checkpoint* teacher, std::size_t coord_samples) {
    std::vector<std::size_t> all(batch.rows);
    std::iota(all.begin(), all.end(), 0);
    const Checkpoint* anchor = theta0 ? theta0 : &c;

    std::vector<double> grad;
    batch_loss_and_grad(spec, c, batch, all, config, anchor, teacher, &grad);

    const std::size_t begin =
        config.mode == TrainMode::LinearHead ? c.layout.entry("head").offset : 0;
    const std::size_t len = c.values.size() - begin;
    auto rng = make_stream("grad-check", config.seed);

    const double h = 1e-5;
    double worst = 0.0;
    Checkpoint probe = c;
    for (std::size_t s = 0; s < std::min(coord_samples, len); ++s) {
        const std::size_t i = begin + rng.next_below(len);
        const double orig = probe.values[i];
        probe.values[i] = orig + h;
        const double lp = batch_loss_and_grad(spec, probe, batch, all, config, anchor,
                                              teacher, nullptr);
        probe.values[i] = orig - h;
        const double lm = batch_loss_and_grad(spec, probe, batch, all, config, anchor,
                                              teacher, nullptr);
        probe.values[i] = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double denom = std::max({1.0, std::abs(numeric), std::abs(grad[i])});
        worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
    }
    return worst;
}

}  // namespace wiseft
