#include "uda/clustering.hpp"

#include <limits>
#include <string>
#include <vector>

namespace uda {

namespace {

void normalize_rows(Matrix& m) {
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const double norm = m.row(k).norm();
    if (norm > 0.0) m.row(k) /= norm;
  }
}

// Index of the nearest row of centers under squared Euclidean distance,
// lowest index winning ties.
Eigen::Index nearest_center(const Matrix& centers,
                            const Matrix::ConstRowXpr& x) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (centers.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

// Means accumulated per-sample in index order so results are reproducible
// bit for bit.
void compute_means(const Matrix& features, const IntVector& assignment,
                   Matrix& means, IntVector& counts) {
  means.setZero();
  counts.setZero();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    means.row(assignment(i)) += features.row(i);
    ++counts(assignment(i));
  }
  for (Eigen::Index k = 0; k < means.rows(); ++k)
    if (counts(k) > 0) means.row(k) /= static_cast<double>(counts(k));
}

}  // namespace

CentroidSet source_centroids(const Matrix& features, const IntVector& labels,
                             int num_classes) {
  if (labels.size() != features.rows())
    throw DataError("label count does not match feature rows");
  CentroidSet out;
  out.centroids = Matrix::Zero(num_classes, features.cols());
  out.counts = IntVector::Zero(num_classes);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int k = labels(i);
    if (k < 0 || k >= num_classes)
      throw DataError("label out of range at row " + std::to_string(i));
    out.centroids.row(k) += features.row(i);
    ++out.counts(k);
  }
  for (int k = 0; k < num_classes; ++k) {
    if (out.counts(k) == 0)
      throw DataError("class " + std::to_string(k) + " has no samples");
    out.centroids.row(k) /= static_cast<double>(out.counts(k));
  }
  normalize_rows(out.centroids);
  return out;
}

KmeansResult kmeans(const Matrix& features, const CentroidSet& init,
                    int max_iters, double tol) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k_clusters = init.centroids.rows();
  if (k_clusters > n)
    throw ConfigError("k-means needs at least as many samples as clusters");
  if (k_clusters < 1) throw ConfigError("k-means needs at least one cluster");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (init.centroids.cols() != features.cols())
    throw DataError("init centroid dimension does not match features");

  KmeansResult result;
  result.assignment = IntVector::Zero(n);
  Matrix centers = init.centroids;
  Matrix means(k_clusters, features.cols());
  IntVector counts(k_clusters);

  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;
    for (Eigen::Index i = 0; i < n; ++i)
      result.assignment(i) =
          static_cast<int>(nearest_center(centers, features.row(i)));
    compute_means(features, result.assignment, means, counts);

    // Reseed any emptied cluster with the sample farthest from its own
    // cluster's new mean, drawn from a cluster that can spare one. Lowest
    // empty cluster first; ties on distance go to the lowest sample index.
    bool repaired = false;
    for (Eigen::Index k = 0; k < k_clusters; ++k) {
      if (counts(k) > 0) continue;
      Eigen::Index donor = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int c = result.assignment(i);
        if (counts(c) < 2) continue;
        const double d = (features.row(i) - means.row(c)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          donor = i;
        }
      }
      if (donor < 0) break;  // every cluster is a singleton; nothing to move
      --counts(result.assignment(donor));
      result.assignment(donor) = static_cast<int>(k);
      ++counts(k);
      repaired = true;
    }
    if (repaired) compute_means(features, result.assignment, means, counts);

    const double shift = (means - centers).rowwise().norm().maxCoeff();
    centers = means;
    if (shift < tol) break;
  }

  result.means = means;
  result.centroids.centroids = means;
  normalize_rows(result.centroids.centroids);
  result.centroids.counts = counts;
  return result;
}

CentroidSet moving_average_update(const CentroidSet& cache,
                                  const Matrix& features,
                                  const IntVector& assignment, double alpha) {
  if (alpha < 0.0) throw ConfigError("moving-average alpha must be >= 0");
  if (assignment.size() != features.rows())
    throw DataError("assignment length does not match feature rows");
  const Eigen::Index k_clusters = cache.centroids.rows();
  if (features.cols() != cache.centroids.cols())
    throw DataError("feature dimension does not match cached centroids");

  Matrix means = Matrix::Zero(k_clusters, features.cols());
  IntVector counts = IntVector::Zero(k_clusters);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int k = assignment(i);
    if (k < 0 || k >= k_clusters)
      throw DataError("assignment out of range at row " + std::to_string(i));
    means.row(k) += features.row(i);
    ++counts(k);
  }

  CentroidSet out;
  out.centroids = cache.centroids;
  out.counts = counts;
  for (Eigen::Index k = 0; k < k_clusters; ++k) {
    if (counts(k) == 0) continue;  // keep the cached row
    means.row(k) /= static_cast<double>(counts(k));
    const double norm = means.row(k).norm();
    if (norm > 0.0) means.row(k) /= norm;
    out.centroids.row(k) = means.row(k) + alpha * cache.centroids.row(k);
    const double blended = out.centroids.row(k).norm();
    if (blended > 0.0) out.centroids.row(k) /= blended;
  }
  return out;
}

}  // namespace uda
