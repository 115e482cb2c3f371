#include "uda/datagen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

namespace uda {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_shift_spec(const ShiftSpec& spec, int dim) {
  if (spec.noise_std < 0.0) {
    throw ConfigError("noise_std must be >= 0");
  }
  if (spec.class_sep <= 0.0) {
    throw ConfigError("class_sep must be > 0");
  }
  if (spec.samples_per_class_source < 1 || spec.samples_per_class_target < 1) {
    throw ConfigError("samples per class must be >= 1");
  }
  if (spec.translation.size() != 0 && spec.translation.size() != dim) {
    throw ConfigError("translation length " +
                      std::to_string(spec.translation.size()) +
                      " does not match dim " + std::to_string(dim));
  }
}

Matrix sample_blobs(const Matrix& means, int per_class, double noise_std,
                    std::mt19937_64& rng, IntVector& labels_out) {
  const int k = static_cast<int>(means.rows());
  const int dim = static_cast<int>(means.cols());
  Matrix points(static_cast<Eigen::Index>(k) * per_class, dim);
  labels_out.resize(points.rows());
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Index row = 0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) {
        points(row, j) = means(c, j) + noise_std * gauss(rng);
      }
      labels_out(row) = c;
    }
  }
  return points;
}

}  // namespace

Matrix gaussian_class_means(int num_classes, int dim, double class_sep) {
  Matrix means = Matrix::Zero(num_classes, dim);
  for (int k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / num_classes;
    means(k, 0) = class_sep * std::cos(angle);
    means(k, 1) = class_sep * std::sin(angle);
  }
  return means;
}

Matrix shift_points(const Matrix& points, const ShiftSpec& spec) {
  Matrix out = points;
  if (spec.rotation_deg != 0.0) {
    const double a = spec.rotation_deg * kDegToRad;
    const double c = std::cos(a), s = std::sin(a);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double x = out(i, 0), y = out(i, 1);
      out(i, 0) = c * x - s * y;
      out(i, 1) = s * x + c * y;
    }
  }
  if (spec.translation.size() > 0) {
    out.rowwise() += spec.translation.transpose();
  }
  return out;
}

std::pair<LabeledSet, UnlabeledSet> generate_gaussian_pair(
    const ShiftSpec& spec, int num_classes, int dim, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (dim < 2) throw ConfigError("dim must be >= 2");
  check_shift_spec(spec, dim);

  const Matrix means = gaussian_class_means(num_classes, dim, spec.class_sep);
  std::mt19937_64 rng(seed);

  LabeledSet source;
  source.features = sample_blobs(means, spec.samples_per_class_source,
                                 spec.noise_std, rng, source.labels);
  source.num_classes = num_classes;

  UnlabeledSet target;
  Matrix raw = sample_blobs(means, spec.samples_per_class_target,
                            spec.noise_std, rng, target.hidden_labels);
  target.features = shift_points(raw, spec);

  validate(source);
  validate(target, num_classes);
  return {std::move(source), std::move(target)};
}

std::pair<LabeledSet, UnlabeledSet> generate_two_moons_pair(
    double noise_std, double rotation_deg, int n_source, int n_target,
    std::uint64_t seed) {
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  if (n_source < 2 || n_target < 2) {
    throw ConfigError("two moons needs at least 2 samples per domain");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> arc(0.0, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Upper moon on the unit circle, lower moon shifted to interleave.
  auto moon_point = [&](int cls) -> Eigen::RowVector2d {
    const double t = arc(rng);
    if (cls == 0) return {std::cos(t), std::sin(t)};
    return {1.0 - std::cos(t), 0.5 - std::sin(t)};
  };
  auto fill = [&](Eigen::Index n, double rot, Matrix& points,
                  IntVector& labels) {
    points.resize(n, 2);
    labels.resize(n);
    const Eigen::Index n0 = (n + 1) / 2;
    const double a = rot * kDegToRad;
    const double c = std::cos(a), s = std::sin(a);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int cls = i < n0 ? 0 : 1;
      Eigen::RowVector2d p = moon_point(cls);
      if (rot != 0.0) p = {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
      points(i, 0) = p.x() + noise_std * gauss(rng);
      points(i, 1) = p.y() + noise_std * gauss(rng);
      labels(i) = cls;
    }
  };

  LabeledSet source;
  source.num_classes = 2;
  fill(n_source, 0.0, source.features, source.labels);

  UnlabeledSet target;
  fill(n_target, rotation_deg, target.features, target.hidden_labels);

  validate(source);
  validate(target, 2);
  return {std::move(source), std::move(target)};
}

namespace {

struct RawCsv {
  Matrix features;
  IntVector labels;  // -1 entries mean "absent"
};

RawCsv parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  Eigen::Index width = -1;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const char* first = line.data() + pos;
      const char* last = line.data() + comma;
      while (first < last && (*first == ' ' || *first == '\t')) ++first;
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(first, last, value);
      while (ptr < last && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
      if (ec != std::errc() || ptr != last) {
        throw DataError(path + ": parse error at row " +
                        std::to_string(lineno));
      }
      cells.push_back(value);
      pos = comma + 1;
    }
    if (cells.size() < 2) {
      throw DataError(path + ": row " + std::to_string(lineno) +
                      " needs at least one feature and a label");
    }
    if (width < 0) {
      width = static_cast<Eigen::Index>(cells.size());
    } else if (static_cast<Eigen::Index>(cells.size()) != width) {
      throw DataError(path + ": row " + std::to_string(lineno) +
                      " has inconsistent column count");
    }
    const double label_cell = cells.back();
    cells.pop_back();
    for (double v : cells) {
      if (!std::isfinite(v)) {
        throw DataError(path + ": non-finite feature at row " +
                        std::to_string(lineno));
      }
    }
    const int label = static_cast<int>(label_cell);
    if (static_cast<double>(label) != label_cell || label < -1) {
      throw DataError(path + ": bad label at row " + std::to_string(lineno));
    }
    rows.push_back(std::move(cells));
    labels.push_back(label);
  }
  if (rows.empty()) throw DataError(path + ": empty file");

  RawCsv out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), width - 1);
  out.labels.resize(static_cast<Eigen::Index>(labels.size()));
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
      out.features(i, j) = rows[static_cast<std::size_t>(i)]
                               [static_cast<std::size_t>(j)];
    }
    out.labels(i) = labels[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace

LabeledSet load_labeled_csv(const std::string& path) {
  RawCsv raw = parse_csv(path);
  for (Eigen::Index i = 0; i < raw.labels.size(); ++i) {
    if (raw.labels(i) < 0) {
      throw DataError(path + ": missing label (-1) at row " +
                      std::to_string(i + 1) + " in a labeled load");
    }
  }
  LabeledSet set;
  set.features = std::move(raw.features);
  set.labels = std::move(raw.labels);
  set.num_classes = set.labels.maxCoeff() + 1;
  validate(set);
  return set;
}

UnlabeledSet load_unlabeled_csv(const std::string& path) {
  RawCsv raw = parse_csv(path);
  const bool any_present = (raw.labels.array() >= 0).any();
  const bool any_absent = (raw.labels.array() < 0).any();
  if (any_present && any_absent) {
    throw DataError(path + ": mixed -1 and real labels in one file");
  }
  UnlabeledSet set;
  set.features = std::move(raw.features);
  if (any_present) set.hidden_labels = std::move(raw.labels);
  validate(set, any_present ? set.hidden_labels.maxCoeff() + 1 : 0);
  return set;
}

void write_csv(const std::string& path, const Matrix& features,
               const IntVector& labels) {
  if (labels.size() != 0 && labels.size() != features.rows()) {
    throw std::invalid_argument("write_csv: label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  std::ostringstream buf;
  buf.precision(17);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      buf << features(i, j) << ',';
    }
    buf << (labels.size() ? labels(i) : -1) << '\n';
  }
  out << buf.str();
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace uda
