#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wiseft/dataset.hpp"

namespace wiseft {

/// Synthetic distribution recipe: Gaussian class clusters in d_in dimensions.
struct GenSpec {
    std::size_t k = 8;                   // class count
    std::size_t d_in = 16;               // input dimension
    std::size_t per_class_train = 100;
    std::size_t per_class_test = 100;
    double cluster_spread = 1.0;         // per-coordinate stddev around the class mean
    double mean_scale = 4.0;             // scale of the Gaussian class-mean draw
    std::size_t pretrain_style_count = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic perturbation applied to a dataset: rotation in a seeded
/// 2-plane, per-class mean displacement, coordinate masking, additive noise.
struct ShiftSpec {
    double rotation_angle = 0.0;  // radians
    double noise_sigma = 0.0;
    double mean_shift = 0.0;      // displacement magnitude per class
    double mask_fraction = 0.0;   // in [0, 1)
    std::uint64_t seed = 0;

    void validate() const;
    bool is_identity() const {
        return rotation_angle == 0.0 && noise_sigma == 0.0 && mean_shift == 0.0 &&
               mask_fraction == 0.0;
    }
};

// Class means drawn once per spec seed; exposed so tests can measure
// cluster separation.
std::vector<std::vector<double>> class_means(const GenSpec& spec);

// Gaussian clusters around the class means. Train and test use disjoint
// PRNG streams; bit-identical for identical specs.
std::pair<Dataset, Dataset> gen_reference(const GenSpec& spec);

// Union of pretrain_style_count style-transformed copies of the reference
// clusters, each under its own sub-seed. Style 0 is the identity.
Dataset gen_pretrain_mixture(const GenSpec& spec);

// rotate -> mean shift -> mask -> noise, in that order. Labels unchanged.
Dataset apply_shift(const Dataset& d, const ShiftSpec& s);

// Exactly k_shot rows per class, seeded sampling without replacement,
// output ordered by class then draw order.
Dataset subsample_per_class(const Dataset& d, std::size_t k_shot, std::uint64_t seed);

}  // namespace wiseft
