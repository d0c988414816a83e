#include "wiseft/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wiseft/errors.hpp"
#include "wiseft/prng.hpp"

namespace wiseft {

void GenSpec::validate() const {
    if (k == 0 || d_in == 0 || per_class_train == 0 || per_class_test == 0 ||
        pretrain_style_count == 0)
        throw DomainError("gen spec: all counts must be positive");
    if (!(cluster_spread > 0.0)) throw DomainError("gen spec: cluster_spread must be > 0");
}

void ShiftSpec::validate() const {
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0))
        throw DomainError("shift spec: mask_fraction must lie in [0,1)");
    if (!(noise_sigma >= 0.0)) throw DomainError("shift spec: noise_sigma must be >= 0");
}

std::vector<std::vector<double>> class_means(const GenSpec& spec) {
    spec.validate();
    auto rng = make_stream("class-means", spec.seed);
    std::vector<std::vector<double>> means(spec.k, std::vector<double>(spec.d_in));
    for (auto& m : means)
        for (auto& v : m) v = spec.mean_scale * rng.next_gaussian();
    return means;
}

namespace {

Dataset sample_clusters(const GenSpec& spec, const std::vector<std::vector<double>>& means,
                        std::size_t per_class, const std::string& stream_purpose,
                        std::uint64_t stream_seed_val, const std::string& tag,
                        const std::string& split) {
    Dataset d;
    d.cols = spec.d_in;
    d.rows = spec.k * per_class;
    d.tag = tag;
    d.split = split;
    d.features.resize(d.rows * d.cols);
    d.labels.resize(d.rows);
    auto rng = make_stream(stream_purpose, stream_seed_val);
    std::size_t i = 0;
    for (std::size_t c = 0; c < spec.k; ++c) {
        for (std::size_t n = 0; n < per_class; ++n, ++i) {
            d.labels[i] = static_cast<int>(c);
            double* row = d.row(i);
            for (std::size_t j = 0; j < spec.d_in; ++j)
                row[j] = means[c][j] + spec.cluster_spread * rng.next_gaussian();
        }
    }
    return d;
}

// Orthonormal 2-plane from a seeded Gaussian draw with Gram-Schmidt.
void seeded_plane(Xoshiro256& rng, std::size_t d, std::vector<double>& u,
                  std::vector<double>& v) {
    u.resize(d);
    v.resize(d);
    for (auto& x : u) x = rng.next_gaussian();
    double nu = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    for (auto& x : u) x /= nu;
    for (auto& x : v) x = rng.next_gaussian();
    double dot = std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
    for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
    double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (auto& x : v) x /= nv;
}

void rotate_in_plane(double* row, std::size_t d, const std::vector<double>& u,
                     const std::vector<double>& v, double angle) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        a += row[j] * u[j];
        b += row[j] * v[j];
    }
    const double c = std::cos(angle), s = std::sin(angle);
    const double da = (c - 1.0) * a - s * b;
    const double db = s * a + (c - 1.0) * b;
    for (std::size_t j = 0; j < d; ++j) row[j] += da * u[j] + db * v[j];
}

std::vector<double> class_shift_direction(std::uint64_t seed, int label, std::size_t d,
                                          double magnitude) {
    auto rng = make_stream("shift-class-" + std::to_string(label), seed);
    std::vector<double> dir(d);
    for (auto& x : dir) x = rng.next_gaussian();
    double n = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
    for (auto& x : dir) x *= magnitude / n;
    return dir;
}

}  // namespace

std::pair<Dataset, Dataset> gen_reference(const GenSpec& spec) {
    spec.validate();
    const auto means = class_means(spec);
    Dataset train = sample_clusters(spec, means, spec.per_class_train, "ref-train", spec.seed,
                                    "reference", "train");
    Dataset test = sample_clusters(spec, means, spec.per_class_test, "ref-test", spec.seed,
                                   "reference", "test");
    return {std::move(train), std::move(test)};
}

Dataset gen_pretrain_mixture(const GenSpec& spec) {
    spec.validate();
    const auto means = class_means(spec);
    Dataset mix;
    mix.cols = spec.d_in;
    mix.tag = "pretrain-mixture";
    mix.split = "train";
    for (std::size_t style = 0; style < spec.pretrain_style_count; ++style) {
        const std::uint64_t sub_seed = stream_seed("pretrain-style", spec.seed + style);
        Dataset part = sample_clusters(spec, means, spec.per_class_train, "pretrain-samples",
                                       sub_seed, mix.tag, "train");
        if (style > 0) {
            // Style transform: a seeded in-plane rotation plus a per-class
            // displacement, standing in for a domain change.
            auto srng = make_stream("pretrain-style-params", sub_seed);
            const double angle = 0.5 * srng.next_gaussian();
            const double displacement = std::abs(srng.next_gaussian());
            if (spec.d_in >= 2) {
                std::vector<double> u, v;
                seeded_plane(srng, spec.d_in, u, v);
                for (std::size_t i = 0; i < part.rows; ++i)
                    rotate_in_plane(part.row(i), part.cols, u, v, angle);
            }
            for (std::size_t c = 0; c < spec.k; ++c) {
                const auto dir =
                    class_shift_direction(sub_seed, static_cast<int>(c), spec.d_in, displacement);
                for (std::size_t i = 0; i < part.rows; ++i) {
                    if (part.labels[i] != static_cast<int>(c)) continue;
                    double* row = part.row(i);
                    for (std::size_t j = 0; j < spec.d_in; ++j) row[j] += dir[j];
                }
            }
        }
        mix.features.insert(mix.features.end(), part.features.begin(), part.features.end());
        mix.labels.insert(mix.labels.end(), part.labels.begin(), part.labels.end());
        mix.rows += part.rows;
    }
    return mix;
}

Dataset apply_shift(const Dataset& d, const ShiftSpec& s) {
    s.validate();
    if (s.rotation_angle != 0.0 && d.cols < 2)
        throw DomainError("apply_shift: rotation requires dimension >= 2");
    Dataset out = d;
    out.tag = d.tag + "+shift";

    if (s.rotation_angle != 0.0) {
        auto rng = make_stream("shift-plane", s.seed);
        std::vector<double> u, v;
        seeded_plane(rng, d.cols, u, v);
        for (std::size_t i = 0; i < out.rows; ++i)
            rotate_in_plane(out.row(i), out.cols, u, v, s.rotation_angle);
    }

    if (s.mean_shift != 0.0) {
        int max_label = 0;
        for (int l : out.labels) max_label = std::max(max_label, l);
        std::vector<std::vector<double>> dirs;
        for (int c = 0; c <= max_label; ++c)
            dirs.push_back(class_shift_direction(s.seed, c, out.cols, s.mean_shift));
        for (std::size_t i = 0; i < out.rows; ++i) {
            const auto& dir = dirs[static_cast<std::size_t>(out.labels[i])];
            double* row = out.row(i);
            for (std::size_t j = 0; j < out.cols; ++j) row[j] += dir[j];
        }
    }

    const std::size_t mask_count =
        static_cast<std::size_t>(s.mask_fraction * static_cast<double>(out.cols));
    if (mask_count > 0) {
        auto rng = make_stream("shift-mask", s.seed);
        std::vector<std::size_t> idx(out.cols);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t j = 0; j < mask_count; ++j) {
            const std::size_t pick = j + rng.next_below(idx.size() - j);
            std::swap(idx[j], idx[pick]);
        }
        for (std::size_t i = 0; i < out.rows; ++i) {
            double* row = out.row(i);
            for (std::size_t j = 0; j < mask_count; ++j) row[idx[j]] = 0.0;
        }
    }

    if (s.noise_sigma != 0.0) {
        auto rng = make_stream("shift-noise", s.seed);
        for (double& v : out.features) v += s.noise_sigma * rng.next_gaussian();
    }

    return out;
}

Dataset subsample_per_class(const Dataset& d, std::size_t k_shot, std::uint64_t seed) {
    if (k_shot == 0) throw DomainError("subsample_per_class: k_shot must be positive");
    int max_label = -1;
    for (int l : d.labels) max_label = std::max(max_label, l);

    Dataset out;
    out.cols = d.cols;
    out.tag = d.tag;
    out.split = d.split;
    auto rng = make_stream("k-shot", seed);
    for (int c = 0; c <= max_label; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d.rows; ++i)
            if (d.labels[i] == c) idx.push_back(i);
        if (idx.size() < k_shot)
            throw DataError("subsample_per_class: class " + std::to_string(c) + " has only " +
                            std::to_string(idx.size()) + " samples, need " +
                            std::to_string(k_shot));
        for (std::size_t j = 0; j < k_shot; ++j) {
            const std::size_t pick = j + rng.next_below(idx.size() - j);
            std::swap(idx[j], idx[pick]);
            const double* row = d.row(idx[j]);
            out.features.insert(out.features.end(), row, row + d.cols);
            out.labels.push_back(c);
            ++out.rows;
        }
    }
    return out;
}

}  // namespace wiseft
