#include "uda/assignment.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace uda {

CostMatrix build_cost(const CentroidSet& source, const CentroidSet& target) {
  if (source.centroids.rows() != target.centroids.rows())
    throw DataError("source and target centroid counts differ");
  if (source.centroids.cols() != target.centroids.cols())
    throw DataError("source and target centroid dimensions differ");
  const Eigen::Index k = source.centroids.rows();
  CostMatrix cost(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      cost(i, j) = (source.centroids.row(i) - target.centroids.row(j)).norm();
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  if (cost.rows() != cost.cols())
    throw DataError("assignment cost matrix must be square");
  if (!cost.allFinite())
    throw DataError("assignment cost matrix has non-finite entries");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) throw DataError("assignment cost matrix is empty");

  Assignment result;
  result.perm = IntVector(n);
  if (n == 1) {
    result.perm(0) = 0;
    result.total_cost = cost(0, 0);
    return result;
  }

  // Row/column potentials with 1-based indexing; p[j] holds the row matched
  // to column j, slot 0 the row currently seeking a match.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) result.perm(j - 1) = p[j] - 1;
  // Recompute the total in column order instead of trusting the potentials,
  // so it matches a plain sum over the matching exactly.
  result.total_cost = 0.0;
  for (int j = 0; j < n; ++j) result.total_cost += cost(result.perm(j), j);
  return result;
}

PseudoLabelSet assign_pseudolabels(const IntVector& cluster_of,
                                   const Assignment& assignment) {
  const int k = static_cast<int>(assignment.perm.size());
  PseudoLabelSet out;
  out.cluster_of = cluster_of;
  out.labels = IntVector(cluster_of.size());
  for (Eigen::Index i = 0; i < cluster_of.size(); ++i) {
    const int c = cluster_of(i);
    if (c < 0 || c >= k)
      throw DataError("cluster index out of range at row " +
                      std::to_string(i));
    out.labels(i) = assignment.perm(c);
  }
  return out;
}

}  // namespace uda
