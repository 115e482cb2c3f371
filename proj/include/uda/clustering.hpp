#pragma once

#include "uda/types.hpp"

namespace uda {

/// K centroids as rows, plus how many samples landed on each in the most
/// recent assignment pass. Stored rows are L2-normalized.
struct CentroidSet {
  Matrix centroids;  // K x d, unit rows
  IntVector counts;  // K

  int num_clusters() const { return static_cast<int>(centroids.rows()); }
};

// Per-class means of the labeled features, L2-normalized.
CentroidSet source_centroids(const Matrix& features, const IntVector& labels,
                             int num_classes);

struct KmeansResult {
  CentroidSet centroids;  // normalized final means
  Matrix means;           // raw (unnormalized) final means, K x d
  IntVector assignment;   // cluster index per sample
  int iterations = 0;
};

/// Lloyd's algorithm. Assignment uses squared Euclidean distance on raw
/// features (ties to the lowest cluster index); iteration runs on raw means
/// and only the returned centroids are normalized. A cluster that loses all
/// members is reseeded with the sample farthest from its own cluster's mean.
/// Stops when the largest centroid displacement drops below tol.
KmeansResult kmeans(const Matrix& features, const CentroidSet& init,
                    int max_iters = 100, double tol = 1e-6);

/// Momentum blend of cached centroids with the latest cluster means:
/// c_k <- normalize(normalize(mean of assigned features) + alpha * c_k).
/// Clusters with no assigned samples keep their cached row.
CentroidSet moving_average_update(const CentroidSet& cache,
                                  const Matrix& features,
                                  const IntVector& assignment, double alpha);

}  // namespace uda
