#pragma once

#include "uda/model.hpp"
#include "uda/refinement.hpp"
#include "uda/types.hpp"

#include <optional>
#include <vector>

namespace uda {

enum class BandwidthMode { kFixed, kMedian };

struct KernelSpec {
  BandwidthMode mode = BandwidthMode::kMedian;
  double sigma = 1.0;  // used when mode == kFixed
};

// exp(-||u - v||^2 / (2 sigma^2)).
double rbf(const Vector& u, const Vector& v, double sigma);

// Median over all pairwise Euclidean distances between rows; 0 when there
// are fewer than two rows.
double median_pairwise_distance(const Matrix& points);

// Fixed sigma, or the median heuristic over `points` floored at 1e-3.
double resolve_bandwidth(const KernelSpec& spec, const Matrix& points);

/// Balanced per-class mini-batches from both domains. Rows are stacked
/// class-major (all of the first chosen class, then the next), sources
/// carrying true labels and targets their pseudo-labels.
struct ClassBatch {
  std::vector<int> classes;  // ascending
  Matrix source_x;
  IntVector source_y;
  Matrix target_x;
  IntVector target_y;
};

/// Draws k_b classes uniformly (without replacement) from those present in
/// both the source set and the filtered target set, then n_src / n_tgt
/// samples per class and side — without replacement when the class is large
/// enough, with replacement otherwise. Returns nullopt when no class is
/// present on both sides, in which case the caller should skip the step.
std::optional<ClassBatch> sample_class_batch(const LabeledSet& source,
                                             const Matrix& target_features,
                                             const FilteredTargetSet& filtered,
                                             int k_b, int n_src, int n_tgt,
                                             std::uint64_t seed);

/// Biased squared-MMD estimate between the two row sets under an RBF kernel
/// with the given bandwidth (all three double sums kept in full, diagonal
/// included). When dsrc/dtgt are non-null, adds scale * d(MMD^2)/d(row) to
/// them; the bandwidth is treated as a constant.
double mmd_squared(const Matrix& src, const Matrix& tgt, double sigma,
                   double scale = 1.0, Matrix* dsrc = nullptr,
                   Matrix* dtgt = nullptr);

/// Per-class squared MMD between src_points and tgt_points rows grouped by
/// label, averaged over the classes that have samples on both sides.
/// Gradient semantics match mmd_squared.
double class_mmd(const std::vector<int>& classes, const IntVector& src_labels,
                 const Matrix& src_points, const IntVector& tgt_labels,
                 const Matrix& tgt_points, double sigma, double scale = 1.0,
                 Matrix* dsrc = nullptr, Matrix* dtgt = nullptr);

// Feature-space discrepancy: class_mmd over embedding rows, bandwidth
// resolved on the stacked source+target embeddings.
double c2c_loss(const ClassBatch& batch, const Matrix& src_features,
                const Matrix& tgt_features, const KernelSpec& spec);

// Label-space discrepancy: same estimator over softmax probability rows.
double p2p_loss(const ClassBatch& batch, const Matrix& src_probs,
                const Matrix& tgt_probs, const KernelSpec& spec);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;   // source cross-entropy
  double c2c = 0.0;  // feature discrepancy (0 when tau1 == 0, term skipped)
  double p2p = 0.0;  // probability discrepancy (0 when tau2 == 0)
  NetworkParams grads;
};

/// total = tau1 * c2c + tau2 * p2p + source cross-entropy, with exact
/// reverse-mode gradients through both domains' features and probabilities
/// (and through CE on the source side only). With tau1 = tau2 = 0 the total
/// and gradients equal plain source cross-entropy bit for bit.
LossBreakdown total_loss(const NetworkParams& params, const ClassBatch& batch,
                         double tau1, double tau2, const KernelSpec& spec);

/// The discrepancy part only: total = tau1 * c2c + tau2 * p2p, ce = 0, with
/// the same gradient semantics minus the cross-entropy contribution. Lets a
/// caller pair the discrepancy terms with a supervised loss computed on a
/// different batch than the class-matched one.
LossBreakdown discrepancy_loss(const NetworkParams& params,
                               const ClassBatch& batch, double tau1,
                               double tau2, const KernelSpec& spec);

}  // namespace uda
