#pragma once

#include "uda/clustering.hpp"
#include "uda/types.hpp"

namespace uda {

using CostMatrix = Matrix;

/// Minimum-cost perfect matching between source classes (rows) and target
/// clusters (columns). perm[j] is the source class matched to cluster j.
struct Assignment {
  IntVector perm;
  double total_cost = 0.0;
};

// entries(i, j) = Euclidean distance between source centroid i and target
// centroid j.
CostMatrix build_cost(const CentroidSet& source, const CentroidSet& target);

/// Hungarian algorithm (shortest augmenting paths with potentials, O(K^3)).
/// Deterministic: equal-cost alternatives resolve to the lowest index, so a
/// constant matrix yields the identity permutation.
Assignment hungarian(const CostMatrix& cost);

/// Pseudo-labels for every target sample: the source class its cluster was
/// matched to.
struct PseudoLabelSet {
  IntVector labels;      // perm[cluster_of[i]]
  IntVector cluster_of;  // k-means cluster per sample
};

PseudoLabelSet assign_pseudolabels(const IntVector& cluster_of,
                                   const Assignment& assignment);

}  // namespace uda
