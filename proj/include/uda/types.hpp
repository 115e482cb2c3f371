#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

/// Bad configuration (flags, config file, illegal parameter ranges).
/// The CLI maps this to exit code 2; everything else maps to 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating data (CSV parse errors, NaN features,
/// label range violations).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Source-domain samples: one feature row per sample plus a class label.
struct LabeledSet {
  Matrix features;    // N x d
  IntVector labels;   // length N, values in {0..num_classes-1}
  int num_classes = 0;
};

/// Target-domain samples. hidden_labels, when present, are ground truth kept
/// only for evaluation; no training-path code may read them.
struct UnlabeledSet {
  Matrix features;        // N x d
  IntVector hidden_labels;  // length N or empty

  bool has_hidden_labels() const { return hidden_labels.size() > 0; }
};

// Throw DataError unless the set satisfies its invariants (labels in range,
// every class populated, finite features).
void validate(const LabeledSet& set);
void validate(const UnlabeledSet& set, int num_classes);

// Deterministic seed derivation for independent RNG streams (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace uda
