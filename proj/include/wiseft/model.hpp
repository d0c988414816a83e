#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wiseft/checkpoint.hpp"

namespace wiseft {

enum class Activation { Relu, Identity };

/// MLP classifier: encoder (affine layers with biases, activation between
/// them) feeding a bias-free linear head. Layout names: "enc.<i>.w",
/// "enc.<i>.b", and "head" (d x k).
struct ModelSpec {
    std::vector<std::size_t> layer_widths;  // d_in, hidden..., d
    Activation activation = Activation::Relu;
    std::size_t k = 2;
    bool normalize_features = false;

    std::size_t d_in() const { return layer_widths.front(); }
    std::size_t d_embed() const { return layer_widths.back(); }
    std::size_t encoder_layers() const { return layer_widths.size() - 1; }

    ParamLayout layout() const;

    // Seeded Gaussian init, fan-in scaled; head init separate so the
    // zero-shot construction can overwrite it.
    Checkpoint init_checkpoint(std::uint64_t seed) const;
};

// Encoder output for one input row. With normalize_features the result has
// unit l2 norm; an all-zero embedding stays zero and sets *zero_flagged.
std::vector<double> forward_features(const ModelSpec& spec, const Checkpoint& c,
                                     std::span<const double> x, bool* zero_flagged = nullptr);

// embedding^T * head.
std::vector<double> logits(const ModelSpec& spec, const Checkpoint& c,
                           std::span<const double> x);

// Column j = l2-normalized mean of class-j prototype embeddings.
// Returns the head values row-major (d x k).
std::vector<double> build_zero_shot_head(
    const std::vector<std::vector<std::vector<double>>>& prototype_sets);

// argmax with lowest-index tie-break.
int predict(std::span<const double> logit_row);

// max minus second max; requires k >= 2.
double margin(std::span<const double> logit_row);

}  // namespace wiseft
