#include "uda/refinement.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace uda {

void check_schedule(const SelfPacedSchedule& schedule) {
  if (schedule.lambda <= 0.0)
    throw ConfigError("self-paced lambda must be > 0");
  if (schedule.gamma <= 1.0) throw ConfigError("self-paced gamma must be > 1");
  if (schedule.n < 0 || schedule.n > schedule.n_max)
    throw ConfigError("self-paced epoch counter must lie in [0, n_max]");
}

SelectionMask select(const Vector& nlls, const SelfPacedSchedule& schedule) {
  check_schedule(schedule);
  const double thr = schedule.threshold();
  SelectionMask mask;
  mask.v = IntVector(nlls.size());
  for (Eigen::Index i = 0; i < nlls.size(); ++i) {
    if (!(nlls(i) >= 0.0))
      throw DataError("negative or non-finite log-likelihood at row " +
                      std::to_string(i));
    mask.v(i) = nlls(i) <= thr ? 1 : 0;
  }
  return mask;
}

double self_paced_loss(const Vector& nlls, const SelectionMask& mask,
                       const SelfPacedSchedule& schedule) {
  if (nlls.size() != mask.v.size())
    throw DataError("mask length does not match sample count");
  const double thr = schedule.threshold();
  double total = 0.0;
  for (Eigen::Index i = 0; i < nlls.size(); ++i)
    if (mask.v(i) == 1) total += nlls(i) - thr;
  return total / static_cast<double>(nlls.size());
}

RefineResult refine(const NetworkParams& aux, const Matrix& target_features,
                    const IntVector& pseudo_labels,
                    const SelfPacedSchedule& schedule, OptimizerState& opt,
                    const RefineOptions& options) {
  check_schedule(schedule);
  if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (pseudo_labels.size() != target_features.rows())
    throw DataError("pseudo-labels must cover every target sample");

  const Eigen::Index n_target = target_features.rows();
  RefineResult result;
  result.params = aux;

  SelfPacedSchedule sched = schedule;
  for (; sched.n <= sched.n_max; ++sched.n) {
    const Vector nlls =
        per_sample_nll(result.params, target_features, pseudo_labels);
    result.final_mask = select(nlls, sched);

    RefineEpochStats stats;
    stats.n = sched.n;
    stats.threshold = sched.threshold();
    stats.selected = result.final_mask.count();
    stats.mean_nll = nlls.mean();
    result.epochs.push_back(stats);

    if (stats.selected == 0) continue;  // nothing to train on this epoch

    std::vector<int> order;
    order.reserve(stats.selected);
    for (Eigen::Index i = 0; i < n_target; ++i)
      if (result.final_mask.v(i) == 1) order.push_back(static_cast<int>(i));
    std::mt19937_64 rng(
        derive_seed(options.seed, static_cast<std::uint64_t>(sched.n)));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + options.batch_size);
      Matrix batch(stop - start, target_features.cols());
      IntVector labels(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        batch.row(b - start) = target_features.row(order[b]);
        labels(b - start) = pseudo_labels(order[b]);
      }
      const ForwardTrace trace = forward(result.params, batch);
      // The selection loss's 1/N_t factor defines the reported value and the
      // closed-form mask update; the SGD step uses the conventional batch
      // mean so the step size does not shrink with the unselected remainder.
      Matrix dlogits = trace.probs;
      for (Eigen::Index i = 0; i < labels.size(); ++i)
        dlogits(i, labels(i)) -= 1.0;
      dlogits /= static_cast<double>(labels.size());
      const NetworkParams grads =
          backward(result.params, trace, dlogits, Matrix());
      sgd_step(result.params, grads, opt);
    }
  }

  // Report the mask for the final parameters at the widest threshold.
  sched.n = sched.n_max;
  result.final_mask = select(
      per_sample_nll(result.params, target_features, pseudo_labels), sched);
  return result;
}

FilteredTargetSet confidence_check(const NetworkParams& aux,
                                   const Matrix& target_features,
                                   const IntVector& pseudo_labels,
                                   double lambda) {
  if (lambda <= 0.0) throw ConfigError("confidence lambda must be > 0");
  if (pseudo_labels.size() != target_features.rows())
    throw DataError("pseudo-labels must cover every target sample");
  const Vector nlls = per_sample_nll(aux, target_features, pseudo_labels);
  FilteredTargetSet out;
  for (Eigen::Index i = 0; i < nlls.size(); ++i)
    if (nlls(i) <= lambda) out.indices.push_back(static_cast<int>(i));
  out.pseudo_labels = IntVector(out.indices.size());
  for (std::size_t i = 0; i < out.indices.size(); ++i)
    out.pseudo_labels(static_cast<Eigen::Index>(i)) =
        pseudo_labels(out.indices[i]);
  return out;
}

}  // namespace uda
