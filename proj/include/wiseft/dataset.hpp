#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wiseft {

/// Row-major feature matrix with integer labels and a distribution tag.
struct Dataset {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> features;  // rows * cols, row-major
    std::vector<int> labels;       // in [0, k)
    std::string tag;
    std::string split;  // "train" or "test"

    double* row(std::size_t i) { return features.data() + i * cols; }
    const double* row(std::size_t i) const { return features.data() + i * cols; }
};

// CSV with header `label,f0,...,f{d-1}`; reals printed shortest-round-trip.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace wiseft
