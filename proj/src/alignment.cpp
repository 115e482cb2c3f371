#include "uda/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace uda {

namespace {

constexpr double kSigmaFloor = 1e-3;

// Rows of m whose label equals k, in input order.
Matrix rows_with_label(const Matrix& m, const IntVector& labels, int k) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) == k) idx.push_back(i);
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

// Scatters per-row gradients for class k back to the stacked gradient.
void scatter_rows(Matrix& into, const IntVector& labels, int k,
                  const Matrix& grads) {
  Eigen::Index next = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) == k) into.row(i) += grads.row(next++);
}

// First `take` elements of a seeded partial Fisher-Yates shuffle of `pool`.
std::vector<int> draw_without_replacement(std::vector<int> pool, int take,
                                          std::mt19937_64& rng) {
  for (int i = 0; i < take; ++i) {
    std::uniform_int_distribution<int> pick(i,
                                            static_cast<int>(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

std::vector<int> draw_with_replacement(const std::vector<int>& pool, int take,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(pool.size()) - 1);
  std::vector<int> out(take);
  for (int i = 0; i < take; ++i) out[i] = pool[pick(rng)];
  return out;
}

}  // namespace

double rbf(const Vector& u, const Vector& v, double sigma) {
  if (u.size() != v.size())
    throw DataError("kernel arguments have different dimensions");
  if (sigma <= 0.0) throw ConfigError("kernel bandwidth must be > 0");
  return std::exp(-(u - v).squaredNorm() / (2.0 * sigma * sigma));
}

double median_pairwise_distance(const Matrix& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) return 0.0;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dists.push_back((points.row(i) - points.row(j)).norm());
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  return m % 2 == 1 ? dists[m / 2]
                    : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

double resolve_bandwidth(const KernelSpec& spec, const Matrix& points) {
  if (spec.mode == BandwidthMode::kFixed) {
    if (spec.sigma <= 0.0) throw ConfigError("kernel sigma must be > 0");
    return spec.sigma;
  }
  return std::max(kSigmaFloor, median_pairwise_distance(points));
}

double mmd_squared(const Matrix& src, const Matrix& tgt, double sigma,
                   double scale, Matrix* dsrc, Matrix* dtgt) {
  if (src.cols() != tgt.cols())
    throw DataError("sample sets have different dimensions");
  if (sigma <= 0.0) throw ConfigError("kernel bandwidth must be > 0");
  const Eigen::Index ns = src.rows(), nt = tgt.rows();
  if (ns == 0 || nt == 0) throw DataError("empty sample set");
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double wss = 1.0 / static_cast<double>(ns * ns);
  const double wtt = 1.0 / static_cast<double>(nt * nt);
  const double wst = 2.0 / static_cast<double>(ns * nt);

  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < ns; ++j)
      ss += std::exp(-(src.row(i) - src.row(j)).squaredNorm() * inv2s2);
  for (Eigen::Index i = 0; i < nt; ++i)
    for (Eigen::Index j = 0; j < nt; ++j)
      tt += std::exp(-(tgt.row(i) - tgt.row(j)).squaredNorm() * inv2s2);
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < nt; ++j)
      st += std::exp(-(src.row(i) - tgt.row(j)).squaredNorm() * inv2s2);
  const double value = wss * ss + wtt * tt - wst * st;

  if (dsrc != nullptr || dtgt != nullptr) {
    // d k(u,v) / d u = -k(u,v) (u - v) / sigma^2; each within-domain pair
    // contributes twice by symmetry.
    const double invs2 = 1.0 / (sigma * sigma);
    if (dsrc != nullptr) {
      for (Eigen::Index a = 0; a < ns; ++a) {
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(src.cols());
        for (Eigen::Index j = 0; j < ns; ++j) {
          const Eigen::RowVectorXd diff = src.row(a) - src.row(j);
          g -= 2.0 * wss * invs2 * std::exp(-diff.squaredNorm() * inv2s2) *
               diff;
        }
        for (Eigen::Index j = 0; j < nt; ++j) {
          const Eigen::RowVectorXd diff = src.row(a) - tgt.row(j);
          g += wst * invs2 * std::exp(-diff.squaredNorm() * inv2s2) * diff;
        }
        dsrc->row(a) += scale * g;
      }
    }
    if (dtgt != nullptr) {
      for (Eigen::Index b = 0; b < nt; ++b) {
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(tgt.cols());
        for (Eigen::Index j = 0; j < nt; ++j) {
          const Eigen::RowVectorXd diff = tgt.row(b) - tgt.row(j);
          g -= 2.0 * wtt * invs2 * std::exp(-diff.squaredNorm() * inv2s2) *
               diff;
        }
        for (Eigen::Index i = 0; i < ns; ++i) {
          const Eigen::RowVectorXd diff = tgt.row(b) - src.row(i);
          g += wst * invs2 * std::exp(-diff.squaredNorm() * inv2s2) * diff;
        }
        dtgt->row(b) += scale * g;
      }
    }
  }
  return value;
}

double class_mmd(const std::vector<int>& classes, const IntVector& src_labels,
                 const Matrix& src_points, const IntVector& tgt_labels,
                 const Matrix& tgt_points, double sigma, double scale,
                 Matrix* dsrc, Matrix* dtgt) {
  // Classes missing on either side are skipped and drop out of the divisor.
  std::vector<int> usable;
  for (int k : classes) {
    const bool in_src = (src_labels.array() == k).any();
    const bool in_tgt = (tgt_labels.array() == k).any();
    if (in_src && in_tgt) usable.push_back(k);
  }
  if (usable.empty()) return 0.0;
  const double class_scale = scale / static_cast<double>(usable.size());

  double total = 0.0;
  for (int k : usable) {
    const Matrix sk = rows_with_label(src_points, src_labels, k);
    const Matrix tk = rows_with_label(tgt_points, tgt_labels, k);
    Matrix dsk, dtk;
    Matrix* dsk_ptr = nullptr;
    Matrix* dtk_ptr = nullptr;
    if (dsrc != nullptr) {
      dsk = Matrix::Zero(sk.rows(), sk.cols());
      dsk_ptr = &dsk;
    }
    if (dtgt != nullptr) {
      dtk = Matrix::Zero(tk.rows(), tk.cols());
      dtk_ptr = &dtk;
    }
    total += mmd_squared(sk, tk, sigma, class_scale, dsk_ptr, dtk_ptr);
    if (dsrc != nullptr) scatter_rows(*dsrc, src_labels, k, dsk);
    if (dtgt != nullptr) scatter_rows(*dtgt, tgt_labels, k, dtk);
  }
  return total / static_cast<double>(usable.size());
}

double c2c_loss(const ClassBatch& batch, const Matrix& src_features,
                const Matrix& tgt_features, const KernelSpec& spec) {
  Matrix stacked(src_features.rows() + tgt_features.rows(),
                 src_features.cols());
  stacked << src_features, tgt_features;
  const double sigma = resolve_bandwidth(spec, stacked);
  return class_mmd(batch.classes, batch.source_y, src_features,
                   batch.target_y, tgt_features, sigma);
}

double p2p_loss(const ClassBatch& batch, const Matrix& src_probs,
                const Matrix& tgt_probs, const KernelSpec& spec) {
  Matrix stacked(src_probs.rows() + tgt_probs.rows(), src_probs.cols());
  stacked << src_probs, tgt_probs;
  const double sigma = resolve_bandwidth(spec, stacked);
  return class_mmd(batch.classes, batch.source_y, src_probs, batch.target_y,
                   tgt_probs, sigma);
}

std::optional<ClassBatch> sample_class_batch(const LabeledSet& source,
                                             const Matrix& target_features,
                                             const FilteredTargetSet& filtered,
                                             int k_b, int n_src, int n_tgt,
                                             std::uint64_t seed) {
  if (k_b < 1) throw ConfigError("classes per batch must be >= 1");
  if (n_src < 1 || n_tgt < 1)
    throw ConfigError("per-class sample counts must be >= 1");

  // Classes eligible for alignment: present in the source set and surviving
  // the confidence filter on the target side.
  std::vector<std::vector<int>> src_by_class(source.num_classes);
  for (Eigen::Index i = 0; i < source.labels.size(); ++i)
    src_by_class[source.labels(i)].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> tgt_by_class(source.num_classes);
  for (Eigen::Index i = 0; i < filtered.pseudo_labels.size(); ++i) {
    const int k = filtered.pseudo_labels(i);
    if (k < 0 || k >= source.num_classes)
      throw DataError("pseudo-label out of range in filtered target set");
    tgt_by_class[k].push_back(filtered.indices[i]);
  }
  std::vector<int> eligible;
  for (int k = 0; k < source.num_classes; ++k)
    if (!src_by_class[k].empty() && !tgt_by_class[k].empty())
      eligible.push_back(k);
  if (eligible.empty()) return std::nullopt;

  std::mt19937_64 rng(seed);
  const int k_use = std::min<int>(k_b, static_cast<int>(eligible.size()));
  std::vector<int> chosen = draw_without_replacement(eligible, k_use, rng);
  std::sort(chosen.begin(), chosen.end());

  ClassBatch batch;
  batch.classes = chosen;
  batch.source_x = Matrix(k_use * n_src, source.features.cols());
  batch.source_y = IntVector(k_use * n_src);
  batch.target_x = Matrix(k_use * n_tgt, target_features.cols());
  batch.target_y = IntVector(k_use * n_tgt);
  Eigen::Index srow = 0, trow = 0;
  for (int k : chosen) {
    const std::vector<int>& src_pool = src_by_class[k];
    const std::vector<int> src_pick =
        static_cast<int>(src_pool.size()) >= n_src
            ? draw_without_replacement(src_pool, n_src, rng)
            : draw_with_replacement(src_pool, n_src, rng);
    for (int idx : src_pick) {
      batch.source_x.row(srow) = source.features.row(idx);
      batch.source_y(srow++) = k;
    }
    const std::vector<int>& tgt_pool = tgt_by_class[k];
    const std::vector<int> tgt_pick =
        static_cast<int>(tgt_pool.size()) >= n_tgt
            ? draw_without_replacement(tgt_pool, n_tgt, rng)
            : draw_with_replacement(tgt_pool, n_tgt, rng);
    for (int idx : tgt_pick) {
      batch.target_x.row(trow) = target_features.row(idx);
      batch.target_y(trow++) = k;
    }
  }
  return batch;
}

namespace {

LossBreakdown combined_loss(const NetworkParams& params,
                            const ClassBatch& batch, double tau1, double tau2,
                            const KernelSpec& spec, bool with_source_ce) {
  if (tau1 < 0.0 || tau2 < 0.0)
    throw ConfigError("loss weights must be >= 0");

  const ForwardTrace src = forward(params, batch.source_x);
  const ForwardTrace tgt = forward(params, batch.target_x);

  LossBreakdown out;
  Matrix src_dlogits;
  if (with_source_ce) {
    out.ce = cross_entropy(src, batch.source_y);
    src_dlogits = cross_entropy_dlogits(src, batch.source_y);
  } else {
    src_dlogits = Matrix::Zero(src.logits.rows(), src.logits.cols());
  }
  Matrix tgt_dlogits = Matrix::Zero(tgt.logits.rows(), tgt.logits.cols());
  Matrix src_dfeat, tgt_dfeat;  // empty unless the feature loss is active

  if (tau1 > 0.0) {
    Matrix stacked(src.features().rows() + tgt.features().rows(),
                   src.features().cols());
    stacked << src.features(), tgt.features();
    const double sigma = resolve_bandwidth(spec, stacked);
    src_dfeat = Matrix::Zero(src.features().rows(), src.features().cols());
    tgt_dfeat = Matrix::Zero(tgt.features().rows(), tgt.features().cols());
    out.c2c = class_mmd(batch.classes, batch.source_y, src.features(),
                        batch.target_y, tgt.features(), sigma, tau1,
                        &src_dfeat, &tgt_dfeat);
  }
  if (tau2 > 0.0) {
    Matrix stacked(src.probs.rows() + tgt.probs.rows(), src.probs.cols());
    stacked << src.probs, tgt.probs;
    const double sigma = resolve_bandwidth(spec, stacked);
    Matrix src_dprobs = Matrix::Zero(src.probs.rows(), src.probs.cols());
    Matrix tgt_dprobs = Matrix::Zero(tgt.probs.rows(), tgt.probs.cols());
    out.p2p = class_mmd(batch.classes, batch.source_y, src.probs,
                        batch.target_y, tgt.probs, sigma, tau2, &src_dprobs,
                        &tgt_dprobs);
    src_dlogits += softmax_backward(src.probs, src_dprobs);
    tgt_dlogits += softmax_backward(tgt.probs, tgt_dprobs);
  }

  out.total = tau1 * out.c2c + tau2 * out.p2p + out.ce;
  out.grads = backward(params, src, src_dlogits, src_dfeat);
  if (tau1 > 0.0 || tau2 > 0.0) {
    const NetworkParams tgt_grads = backward(params, tgt, tgt_dlogits,
                                             tgt_dfeat);
    accumulate(out.grads, tgt_grads);
  }
  return out;
}

}  // namespace

LossBreakdown total_loss(const NetworkParams& params, const ClassBatch& batch,
                         double tau1, double tau2, const KernelSpec& spec) {
  return combined_loss(params, batch, tau1, tau2, spec, true);
}

LossBreakdown discrepancy_loss(const NetworkParams& params,
                               const ClassBatch& batch, double tau1,
                               double tau2, const KernelSpec& spec) {
  return combined_loss(params, batch, tau1, tau2, spec, false);
}

}  // namespace uda
