#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wiseft {

/// Named, shaped view into a flat parameter vector.
struct LayoutEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

class ParamLayout {
  public:
    ParamLayout() = default;
    // Offsets are assigned contiguously in entry order; names must be unique.
    explicit ParamLayout(std::vector<LayoutEntry> entries);

    const std::vector<LayoutEntry>& entries() const { return entries_; }
    std::size_t total_length() const { return total_length_; }
    const LayoutEntry& entry(const std::string& name) const;
    bool has(const std::string& name) const;

    bool operator==(const ParamLayout& other) const;

  private:
    std::vector<LayoutEntry> entries_;
    std::size_t total_length_ = 0;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::string tag;

    bool operator==(const CheckpointMeta&) const = default;
};

/// Flat 64-bit parameter vector with a named layout; the theta of every
/// weight-space operation.
struct Checkpoint {
    ParamLayout layout;
    std::vector<double> values;
    CheckpointMeta meta;

    // Throws NumericError if any value is non-finite, StructuralError on a
    // length mismatch.
    void validate() const;

    // Span of the parameters of one named entry.
    double* param(const std::string& name);
    const double* param(const std::string& name) const;
};

enum class EmaVariant { ZeroInitDebiased, InitBiased };

/// Running exponential average of parameter iterates. Single-writer.
class EmaState {
  public:
    // Init-biased accumulation starts at init_ref; debiased starts at zero.
    EmaState(EmaVariant variant, double decay, const Checkpoint& init_ref);

    // mu <- beta * mu + (1 - beta) * theta_t
    void update(const Checkpoint& theta_t);

    // Debiased variant returns mu_T / (1 - beta^T); init-biased returns mu_T.
    // Throws StateError when no update has been applied.
    Checkpoint final() const;

    EmaVariant variant() const { return variant_; }
    double decay() const { return decay_; }
    std::uint64_t step() const { return step_; }

  private:
    EmaVariant variant_;
    double decay_;
    std::uint64_t step_ = 0;
    std::vector<double> accumulator_;
    ParamLayout layout_;
    CheckpointMeta ref_meta_;
};

// values[i] = (1 - alpha) * c0.values[i] + alpha * c1.values[i].
// Layouts must match; alpha must lie in [0, 1]. meta is taken from c0 except
// tag, which records the mixing coefficient.
Checkpoint interpolate(const Checkpoint& c0, const Checkpoint& c1, double alpha);

// Euclidean norm of the parameter difference.
double param_distance(const Checkpoint& c0, const Checkpoint& c1);

// .ckpt codec: magic, version byte, LE u64 header length, JSON layout+meta
// header, raw LE f64 values. Round trips bit-exactly.
void save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace wiseft
