#include "wiseft/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "wiseft/errors.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

ParamLayout ModelSpec::layout() const {
    if (layer_widths.empty()) throw DomainError("model spec: need at least d_in");
    if (k < 2) throw DomainError("model spec: k must be >= 2");
    std::vector<LayoutEntry> entries;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
        const std::size_t in = layer_widths[l], out = layer_widths[l + 1];
        entries.push_back({"enc." + std::to_string(l) + ".w", {out, in}, 0});
        entries.push_back({"enc." + std::to_string(l) + ".b", {out}, 0});
    }
    entries.push_back({"head", {d_embed(), k}, 0});
    return ParamLayout(std::move(entries));
}

Checkpoint ModelSpec::init_checkpoint(std::uint64_t seed) const {
    Checkpoint c;
    c.layout = layout();
    c.values.assign(c.layout.total_length(), 0.0);
    c.meta.seed = seed;
    c.meta.tag = "init";
    auto rng = make_stream("model-init", seed);
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
        const std::size_t in = layer_widths[l], out = layer_widths[l + 1];
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        double* w = c.param("enc." + std::to_string(l) + ".w");
        for (std::size_t i = 0; i < out * in; ++i) w[i] = scale * rng.next_gaussian();
        // biases start at zero
    }
    double* head = c.param("head");
    const double hscale = 1.0 / std::sqrt(static_cast<double>(d_embed()));
    for (std::size_t i = 0; i < d_embed() * k; ++i) head[i] = hscale * rng.next_gaussian();
    return c;
}

std::vector<double> forward_features(const ModelSpec& spec, const Checkpoint& c,
                                     std::span<const double> x, bool* zero_flagged) {
    if (x.size() != spec.d_in())
        throw StructuralError("forward_features: input length mismatch");
    if (!(c.layout == spec.layout()))
        throw StructuralError("forward_features: checkpoint layout mismatch");
    if (zero_flagged) *zero_flagged = false;

    std::vector<double> h(x.begin(), x.end());
    for (std::size_t l = 0; l < spec.encoder_layers(); ++l) {
        const std::size_t in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
        const double* w = c.param("enc." + std::to_string(l) + ".w");
        const double* b = c.param("enc." + std::to_string(l) + ".b");
        std::vector<double> next(out);
        for (std::size_t i = 0; i < out; ++i) {
            double acc = b[i];
            const double* wrow = w + i * in;
            for (std::size_t j = 0; j < in; ++j) acc += wrow[j] * h[j];
            next[i] = acc;
        }
        // activation between layers, none after the embedding layer
        if (l + 1 < spec.encoder_layers() && spec.activation == Activation::Relu)
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        h = std::move(next);
    }

    if (spec.normalize_features) {
        const double norm =
            std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));
        if (norm == 0.0) {
            if (zero_flagged) *zero_flagged = true;
        } else {
            for (double& v : h) v /= norm;
        }
    }
    return h;
}

std::vector<double> logits(const ModelSpec& spec, const Checkpoint& c,
                           std::span<const double> x) {
    const auto emb = forward_features(spec, c, x);
    const double* head = c.param("head");
    const std::size_t d = spec.d_embed(), k = spec.k;
    std::vector<double> out(k, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double e = emb[i];
        const double* hrow = head + i * k;
        for (std::size_t j = 0; j < k; ++j) out[j] += e * hrow[j];
    }
    return out;
}

std::vector<double> build_zero_shot_head(
    const std::vector<std::vector<std::vector<double>>>& prototype_sets) {
    if (prototype_sets.empty()) throw DataError("zero-shot head: no classes");
    const std::size_t k = prototype_sets.size();
    if (prototype_sets[0].empty()) throw DataError("zero-shot head: empty prototype set");
    const std::size_t d = prototype_sets[0][0].size();
    std::vector<double> head(d * k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const auto& protos = prototype_sets[c];
        if (protos.empty())
            throw DataError("zero-shot head: empty prototype set for class " +
                            std::to_string(c));
        std::vector<double> mean(d, 0.0);
        for (const auto& p : protos) {
            if (p.size() != d)
                throw StructuralError("zero-shot head: prototype dimension mismatch");
            for (std::size_t i = 0; i < d; ++i) mean[i] += p[i];
        }
        for (double& v : mean) v /= static_cast<double>(protos.size());
        const double norm =
            std::sqrt(std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0));
        if (norm == 0.0)
            throw DataError("zero-shot head: degenerate class " + std::to_string(c) +
                            " (zero mean prototype)");
        for (std::size_t i = 0; i < d; ++i) head[i * k + c] = mean[i] / norm;
    }
    return head;
}

int predict(std::span<const double> logit_row) {
    int best = 0;
    for (std::size_t j = 1; j < logit_row.size(); ++j)
        if (logit_row[j] > logit_row[best]) best = static_cast<int>(j);
    return best;
}

double margin(std::span<const double> logit_row) {
    if (logit_row.size() < 2) throw DomainError("margin: requires k >= 2");
    double top = -std::numeric_limits<double>::infinity();
    double second = top;
    for (double v : logit_row) {
        if (v > top) {
            second = top;
            top = v;
        } else if (v > second) {
            second = v;
        }
    }
    return top - second;
}

}  // namespace wiseft
