#include "uda/datagen.hpp"
#include "uda/types.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

using namespace uda;

namespace {

// Unique-ish temp path under the build tree's working directory.
std::string temp_path(const std::string& name) {
  return "datagen_test_" + name;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("gaussian pair is deterministic and balanced") {
  ShiftSpec spec;
  spec.rotation_deg = 30.0;
  spec.samples_per_class_source = 20;
  spec.samples_per_class_target = 15;
  auto [src_a, tgt_a] = generate_gaussian_pair(spec, 3, 2, 7);
  auto [src_b, tgt_b] = generate_gaussian_pair(spec, 3, 2, 7);

  CHECK(src_a.features == src_b.features);
  CHECK(src_a.labels == src_b.labels);
  CHECK(tgt_a.features == tgt_b.features);
  CHECK(tgt_a.hidden_labels == tgt_b.hidden_labels);

  CHECK(src_a.features.rows() == 60);
  CHECK(tgt_a.features.rows() == 45);
  for (int k = 0; k < 3; ++k) {
    CHECK((src_a.labels.array() == k).count() == 20);
    CHECK((tgt_a.hidden_labels.array() == k).count() == 15);
  }
  CHECK(src_a.num_classes == 3);
  CHECK(tgt_a.has_hidden_labels());
}

TEST_CASE("different seeds give different draws") {
  ShiftSpec spec;
  spec.samples_per_class_source = 10;
  spec.samples_per_class_target = 10;
  auto [src_a, tgt_a] = generate_gaussian_pair(spec, 2, 2, 1);
  auto [src_b, tgt_b] = generate_gaussian_pair(spec, 2, 2, 2);
  CHECK(src_a.features != src_b.features);
}

TEST_CASE("bad shift specs are configuration errors") {
  ShiftSpec spec;
  CHECK_THROWS_AS(generate_gaussian_pair(spec, 1, 2, 0), ConfigError);
  CHECK_THROWS_AS(generate_gaussian_pair(spec, 2, 1, 0), ConfigError);
  spec.noise_std = -0.1;
  CHECK_THROWS_AS(generate_gaussian_pair(spec, 2, 2, 0), ConfigError);
  spec.noise_std = 1.0;
  spec.class_sep = 0.0;
  CHECK_THROWS_AS(generate_gaussian_pair(spec, 2, 2, 0), ConfigError);
  spec.class_sep = 2.0;
  spec.translation = Vector::Zero(3);  // wrong length for dim = 2
  CHECK_THROWS_AS(generate_gaussian_pair(spec, 2, 2, 0), ConfigError);
}

TEST_CASE("zero shift leaves class means bitwise unchanged") {
  const Matrix means = gaussian_class_means(4, 3, 2.0);
  ShiftSpec spec;  // zero rotation, no translation
  CHECK(shift_points(means, spec) == means);
}

TEST_CASE("rotation and translation move points as expected") {
  Matrix p(1, 2);
  p << 1.0, 0.0;
  ShiftSpec spec;
  spec.rotation_deg = 90.0;
  const Matrix rotated = shift_points(p, spec);
  CHECK(rotated(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rotated(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

  spec.rotation_deg = 0.0;
  spec.translation = Vector(2);
  spec.translation << 3.0, -1.0;
  const Matrix moved = shift_points(p, spec);
  CHECK(moved(0, 0) == 4.0);
  CHECK(moved(0, 1) == -1.0);
}

TEST_CASE("class means sit on a circle of radius class_sep") {
  const Matrix means = gaussian_class_means(5, 4, 3.0);
  REQUIRE(means.rows() == 5);
  REQUIRE(means.cols() == 4);
  for (Eigen::Index k = 0; k < means.rows(); ++k) {
    CHECK(means.row(k).head(2).norm() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(means.row(k).tail(2).norm() == 0.0);
  }
}

TEST_CASE("noiseless moons lie exactly on the two arcs") {
  auto [src, tgt] = generate_two_moons_pair(0.0, 0.0, 10, 8, 3);
  CHECK(src.features.rows() == 10);
  CHECK((src.labels.array() == 0).count() == 5);
  CHECK((src.labels.array() == 1).count() == 5);
  for (Eigen::Index i = 0; i < src.features.rows(); ++i) {
    const double x = src.features(i, 0);
    const double y = src.features(i, 1);
    if (src.labels(i) == 0) {
      CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y >= -1e-12);
    } else {
      const double dx = x - 1.0;
      const double dy = y - 0.5;
      CHECK(dx * dx + dy * dy == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(dy <= 1e-12);
    }
  }
  // Zero rotation: target arcs satisfy the same equations.
  for (Eigen::Index i = 0; i < tgt.features.rows(); ++i) {
    const double x = tgt.features(i, 0);
    const double y = tgt.features(i, 1);
    if (tgt.hidden_labels(i) == 0)
      CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("moons generator is deterministic and rejects bad arguments") {
  auto [a_src, a_tgt] = generate_two_moons_pair(0.1, 45.0, 30, 30, 11);
  auto [b_src, b_tgt] = generate_two_moons_pair(0.1, 45.0, 30, 30, 11);
  CHECK(a_src.features == b_src.features);
  CHECK(a_tgt.features == b_tgt.features);
  CHECK_THROWS_AS(generate_two_moons_pair(-0.1, 0.0, 10, 10, 0), ConfigError);
  CHECK_THROWS_AS(generate_two_moons_pair(0.1, 0.0, 1, 10, 0), ConfigError);
}

TEST_CASE("labeled csv parses features and labels") {
  const std::string path = temp_path("labeled.csv");
  {
    std::ofstream out(path);
    out << "0.1,0.2,0\n0.3,0.4,1\n";
  }
  const LabeledSet set = load_labeled_csv(path);
  CHECK(set.features.rows() == 2);
  CHECK(set.features.cols() == 2);
  CHECK(set.num_classes == 2);
  CHECK(set.features(0, 0) == 0.1);
  CHECK(set.labels(1) == 1);
  std::remove(path.c_str());
}

TEST_CASE("csv parse errors name the offending row") {
  const std::string path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "0.1,0.2,0\nNaN,0.4,1\n";
  }
  CHECK_THROWS_WITH_AS(load_labeled_csv(path),
                       doctest::Contains("row 2"), DataError);
  {
    std::ofstream out(path);
    out << "0.1,0.2,0\n0.3,1\n";
  }
  CHECK_THROWS_WITH_AS(load_labeled_csv(path),
                       doctest::Contains("row 2"), DataError);
  {
    std::ofstream out(path);
    out << "0.1,0.2,-1\n";
  }
  CHECK_THROWS_AS(load_labeled_csv(path), DataError);
  {
    std::ofstream out(path);
  }
  CHECK_THROWS_AS(load_labeled_csv(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("unlabeled csv distinguishes hidden labels from none") {
  const std::string path = temp_path("unlabeled.csv");
  {
    std::ofstream out(path);
    out << "0.1,0.2,-1\n0.3,0.4,-1\n";
  }
  const UnlabeledSet no_labels = load_unlabeled_csv(path);
  CHECK_FALSE(no_labels.has_hidden_labels());

  {
    std::ofstream out(path);
    out << "0.1,0.2,1\n0.3,0.4,0\n";
  }
  const UnlabeledSet with_labels = load_unlabeled_csv(path);
  CHECK(with_labels.has_hidden_labels());
  CHECK(with_labels.hidden_labels(0) == 1);

  // Mixing -1 with real labels is ambiguous and rejected.
  {
    std::ofstream out(path);
    out << "0.1,0.2,-1\n0.3,0.4,0\n";
  }
  CHECK_THROWS_AS(load_unlabeled_csv(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("write then load round-trips a generated set exactly") {
  ShiftSpec spec;
  spec.samples_per_class_source = 8;
  spec.samples_per_class_target = 8;
  auto [src, tgt] = generate_gaussian_pair(spec, 3, 4, 99);

  const std::string path = temp_path("roundtrip.csv");
  write_csv(path, src.features, src.labels);
  const LabeledSet reloaded = load_labeled_csv(path);
  CHECK(reloaded.features == src.features);  // 17 digits round-trip doubles
  CHECK(reloaded.labels == src.labels);
  std::remove(path.c_str());
}

}  // TEST_SUITE
