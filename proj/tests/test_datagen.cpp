#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "wiseft/datagen.hpp"
#include "wiseft/errors.hpp"

using namespace wiseft;
namespace fs = std::filesystem;

namespace {

GenSpec small_spec() {
    GenSpec s;
    s.k = 2;
    s.d_in = 6;
    s.per_class_train = 10;
    s.per_class_test = 10;
    s.cluster_spread = 1.0;
    s.mean_scale = 3.0;
    s.pretrain_style_count = 1;
    s.seed = 11;
    return s;
}

// Independent nearest-prototype classifier over the true class means.
double nearest_prototype_accuracy(const Dataset& d,
                                  const std::vector<std::vector<double>>& means) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.rows; ++i) {
        const double* row = d.row(i);
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < means.size(); ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d.cols; ++j) {
                const double diff = row[j] - means[c][j];
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = static_cast<int>(c);
            }
        }
        if (best == d.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(d.rows);
}

}  // namespace

TEST_CASE("gen_reference is deterministic and counts are exact") {
    const auto spec = small_spec();
    const auto [train1, test1] = gen_reference(spec);
    const auto [train2, test2] = gen_reference(spec);
    CHECK(train1.features == train2.features);
    CHECK(test1.features == test2.features);
    CHECK(train1.rows == 20);
    std::map<int, int> counts;
    for (int l : train1.labels) ++counts[l];
    CHECK(counts[0] == 10);
    CHECK(counts[1] == 10);
    // train and test come from disjoint streams
    CHECK(train1.features != test1.features);
}

TEST_CASE("well separated clusters give a near-perfect nearest-prototype classifier") {
    GenSpec spec = small_spec();
    spec.k = 5;
    spec.d_in = 8;
    spec.per_class_test = 200;
    spec.mean_scale = 10.0;
    spec.cluster_spread = 0.5;
    const auto means = class_means(spec);
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < means.size(); ++a)
        for (std::size_t b = a + 1; b < means.size(); ++b) {
            double d = 0.0;
            for (std::size_t j = 0; j < spec.d_in; ++j)
                d += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
            min_sep = std::min(min_sep, std::sqrt(d));
        }
    REQUIRE(min_sep >= 8.0 * spec.cluster_spread);
    const auto [train, test] = gen_reference(spec);
    CHECK(nearest_prototype_accuracy(test, means) >= 0.99);
}

TEST_CASE("pretrain mixture row count and degenerate single-style case") {
    GenSpec spec = small_spec();
    spec.pretrain_style_count = 3;
    const auto mix = gen_pretrain_mixture(spec);
    CHECK(mix.rows == 3 * spec.k * spec.per_class_train);
    spec.pretrain_style_count = 1;
    const auto single = gen_pretrain_mixture(spec);
    CHECK(single.rows == spec.k * spec.per_class_train);
    // identity style: same cluster structure as the reference generator
    const auto means = class_means(spec);
    CHECK(nearest_prototype_accuracy(single, means) ==
          doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("identity shift is a bit-exact no-op") {
    const auto [train, test] = gen_reference(small_spec());
    ShiftSpec identity;
    identity.seed = 5;
    REQUIRE(identity.is_identity());
    const auto out = apply_shift(test, identity);
    CHECK(out.features == test.features);
    CHECK(out.labels == test.labels);
}

TEST_CASE("full-turn rotation recovers the input") {
    const auto [train, test] = gen_reference(small_spec());
    ShiftSpec s;
    s.rotation_angle = 2.0 * 3.14159265358979323846;
    s.seed = 9;
    const auto out = apply_shift(test, s);
    for (std::size_t i = 0; i < test.features.size(); ++i)
        CHECK(std::abs(out.features[i] - test.features[i]) < 1e-9);
}

TEST_CASE("shift determinism, label preservation, and masking") {
    const auto [train, test] = gen_reference(small_spec());
    ShiftSpec s;
    s.rotation_angle = 0.4;
    s.noise_sigma = 0.3;
    s.mean_shift = 1.0;
    s.mask_fraction = 0.5;
    s.seed = 21;
    const auto a = apply_shift(test, s);
    const auto b = apply_shift(test, s);
    CHECK(a.features == b.features);
    CHECK(a.labels == test.labels);
    CHECK(a.rows == test.rows);
}

TEST_CASE("masking almost all coordinates collapses accuracy toward chance") {
    GenSpec spec = small_spec();
    spec.k = 4;
    spec.d_in = 12;
    spec.per_class_test = 250;
    spec.mean_scale = 6.0;
    const auto means = class_means(spec);
    const auto [train, test] = gen_reference(spec);
    REQUIRE(nearest_prototype_accuracy(test, means) > 0.95);

    ShiftSpec s;
    s.mask_fraction = 11.0 / 12.0;  // all but one coordinate
    s.seed = 33;
    const auto masked = apply_shift(test, s);
    std::size_t zeroed = 0;
    for (std::size_t j = 0; j < masked.cols; ++j)
        if (masked.row(0)[j] == 0.0) ++zeroed;
    CHECK(zeroed >= 11);
    // chance is 0.25; allow generous margin above it
    CHECK(nearest_prototype_accuracy(masked, means) < 0.6);
}

TEST_CASE("rotation on 1-d data is a domain error") {
    Dataset d;
    d.rows = 1;
    d.cols = 1;
    d.features = {1.0};
    d.labels = {0};
    ShiftSpec s;
    s.rotation_angle = 0.5;
    CHECK_THROWS_AS(apply_shift(d, s), DomainError);
}

TEST_CASE("subsample_per_class picks exact counts deterministically") {
    GenSpec spec = small_spec();
    spec.k = 5;
    const auto [train, test] = gen_reference(spec);
    const auto one = subsample_per_class(train, 1, 3);
    CHECK(one.rows == 5);
    for (int c = 0; c < 5; ++c) CHECK(one.labels[static_cast<std::size_t>(c)] == c);
    const auto again = subsample_per_class(train, 1, 3);
    CHECK(one.features == again.features);

    // full k-shot is a permutation: same per-class multiset of rows
    const auto full = subsample_per_class(train, spec.per_class_train, 3);
    CHECK(full.rows == train.rows);
    auto sorted_rows = [](const Dataset& d) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < d.rows; ++i)
            rows.emplace_back(d.row(i), d.row(i) + d.cols);
        std::sort(rows.begin(), rows.end());
        return rows;
    };
    CHECK(sorted_rows(full) == sorted_rows(train));
}

TEST_CASE("subsample_per_class names the deficient class") {
    const auto [train, test] = gen_reference(small_spec());
    try {
        subsample_per_class(train, 1000, 1);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("class 0") != std::string::npos);
    }
}

TEST_CASE("dataset csv round trip") {
    const auto [train, test] = gen_reference(small_spec());
    const fs::path path = fs::temp_directory_path() / "wiseft_test_dataset.csv";
    write_dataset(train, path);
    const auto back = read_dataset(path);
    CHECK(back.rows == train.rows);
    CHECK(back.cols == train.cols);
    CHECK(back.labels == train.labels);
    CHECK(back.features == train.features);
    fs::remove(path);
}

TEST_CASE("dataset csv error cases") {
    const fs::path dir = fs::temp_directory_path();
    const fs::path empty = dir / "wiseft_test_empty.csv";
    std::ofstream(empty).flush();
    CHECK_THROWS_AS(read_dataset(empty), CodecError);

    const fs::path header_only = dir / "wiseft_test_header.csv";
    std::ofstream(header_only) << "label,f0,f1\n";
    const auto d = read_dataset(header_only);
    CHECK(d.rows == 0);
    CHECK(d.cols == 2);

    const fs::path ragged = dir / "wiseft_test_ragged.csv";
    std::ofstream(ragged) << "label,f0,f1\n0,1.0\n";
    CHECK_THROWS_AS(read_dataset(ragged), CodecError);

    const fs::path bad_label = dir / "wiseft_test_badlabel.csv";
    std::ofstream(bad_label) << "label,f0\nx,1.0\n";
    CHECK_THROWS_AS(read_dataset(bad_label), CodecError);

    fs::remove(empty);
    fs::remove(header_only);
    fs::remove(ragged);
    fs::remove(bad_label);
}
