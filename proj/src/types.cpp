#include "uda/types.hpp"

#include <vector>

namespace uda {

void validate(const LabeledSet& set) {
  const Eigen::Index n = set.features.rows();
  if (set.labels.size() != n) {
    throw DataError("labeled set: " + std::to_string(set.labels.size()) +
                    " labels for " + std::to_string(n) + " samples");
  }
  if (set.num_classes < 1) {
    throw DataError("labeled set: num_classes must be >= 1");
  }
  if (!set.features.allFinite()) {
    throw DataError("labeled set: non-finite feature value");
  }
  std::vector<int> counts(static_cast<std::size_t>(set.num_classes), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = set.labels(i);
    if (y < 0 || y >= set.num_classes) {
      throw DataError("labeled set: label " + std::to_string(y) +
                      " out of range at row " + std::to_string(i));
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int k = 0; k < set.num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw DataError("labeled set: class " + std::to_string(k) +
                      " has no samples");
    }
  }
}

void validate(const UnlabeledSet& set, int num_classes) {
  if (!set.features.allFinite()) {
    throw DataError("unlabeled set: non-finite feature value");
  }
  if (!set.has_hidden_labels()) return;
  if (set.hidden_labels.size() != set.features.rows()) {
    throw DataError("unlabeled set: hidden label count mismatch");
  }
  for (Eigen::Index i = 0; i < set.hidden_labels.size(); ++i) {
    const int y = set.hidden_labels(i);
    if (y < 0 || y >= num_classes) {
      throw DataError("unlabeled set: hidden label " + std::to_string(y) +
                      " out of range at row " + std::to_string(i));
    }
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace uda
