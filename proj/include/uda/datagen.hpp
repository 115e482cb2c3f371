#pragma once

#include "uda/types.hpp"

#include <string>
#include <utility>

namespace uda {

/// Controls the synthetic source-to-target domain shift. The target domain is
/// the source distribution rotated in the first two feature dimensions and
/// translated; higher dimensions carry noise only.
struct ShiftSpec {
  double rotation_deg = 0.0;
  Vector translation;   // length d; empty means zero
  double class_sep = 2.0;
  double noise_std = 1.0;
  int samples_per_class_source = 200;
  int samples_per_class_target = 200;
};

// Class means on a circle of radius class_sep in the first two dimensions,
// zero elsewhere. Row k is the mean of class k.
Matrix gaussian_class_means(int num_classes, int dim, double class_sep);

// Rotate the first two columns by rotation_deg and add the translation.
// Exact: with zero rotation and zero translation the input is returned
// unchanged bit for bit.
Matrix shift_points(const Matrix& points, const ShiftSpec& spec);

/// K isotropic Gaussian blobs as the source; the target is an independent
/// draw from the same blobs pushed through shift_points. hidden_labels carry
/// the true target classes. Deterministic under the seed.
std::pair<LabeledSet, UnlabeledSet> generate_gaussian_pair(
    const ShiftSpec& spec, int num_classes, int dim, std::uint64_t seed);

/// Two interleaved half circles (K = 2, d = 2); the target arcs are rotated
/// about the origin by rotation_deg before noise is added.
std::pair<LabeledSet, UnlabeledSet> generate_two_moons_pair(
    double noise_std, double rotation_deg, int n_source, int n_target,
    std::uint64_t seed);

// CSV schema: d real feature columns then one integer label column, no
// header. Label -1 marks "ground truth absent" and is only legal on
// unlabeled loads. Values are written with 17 significant digits so a
// write/load round trip is exact.
LabeledSet load_labeled_csv(const std::string& path);
UnlabeledSet load_unlabeled_csv(const std::string& path);
void write_csv(const std::string& path, const Matrix& features,
               const IntVector& labels);

}  // namespace uda
