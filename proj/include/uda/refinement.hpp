#pragma once

#include "uda/assignment.hpp"
#include "uda/model.hpp"
#include "uda/types.hpp"

#include <cmath>
#include <vector>

namespace uda {

/// Easy-to-hard selection threshold gamma^n * lambda that widens as the
/// epoch counter n grows toward n_max.
struct SelfPacedSchedule {
  double lambda = 0.1;
  double gamma = 1.3;
  int n = 0;
  int n_max = 10;

  double threshold() const { return std::pow(gamma, n) * lambda; }
};

void check_schedule(const SelfPacedSchedule& schedule);

/// 0/1 flags over the target set; 1 means the sample takes part in the
/// current training epoch.
struct SelectionMask {
  IntVector v;

  int count() const { return v.sum(); }
  bool all_selected() const { return v.size() > 0 && v.minCoeff() == 1; }
};

// v_i = 1 exactly when nlls_i <= threshold. The mask is the exact minimizer
// of the selection part of the self-paced objective for fixed parameters.
SelectionMask select(const Vector& nlls, const SelfPacedSchedule& schedule);

// Selection loss for a fixed mask: (sum_i v_i * nll_i - threshold * sum_i
// v_i) / N. Exposed mainly so tests can compare against exhaustive search.
double self_paced_loss(const Vector& nlls, const SelectionMask& mask,
                       const SelfPacedSchedule& schedule);

struct RefineOptions {
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct RefineEpochStats {
  int n = 0;
  double threshold = 0.0;
  int selected = 0;
  double mean_nll = 0.0;  // over the full target set
};

struct RefineResult {
  NetworkParams params;
  SelectionMask final_mask;
  std::vector<RefineEpochStats> epochs;
};

/// Trains the auxiliary network on (target features, pseudo-labels) alone.
/// Each epoch recomputes the mask in closed form, then runs one SGD pass
/// over the selected samples; gradients are normalized by the full target
/// count. Runs epochs schedule.n .. n_max inclusive. An empty selection
/// skips the SGD pass but still advances the schedule.
RefineResult refine(const NetworkParams& aux, const Matrix& target_features,
                    const IntVector& pseudo_labels,
                    const SelfPacedSchedule& schedule, OptimizerState& opt,
                    const RefineOptions& options);

/// Target samples the refined auxiliary network is confident about, with
/// their pseudo-labels carried through unchanged.
struct FilteredTargetSet {
  std::vector<int> indices;  // ascending positions into the target set
  IntVector pseudo_labels;   // aligned with indices

  int size() const { return static_cast<int>(indices.size()); }
};

// Keeps sample i iff NLL(x_i, pseudo_i) <= lambda under aux.
FilteredTargetSet confidence_check(const NetworkParams& aux,
                                   const Matrix& target_features,
                                   const IntVector& pseudo_labels,
                                   double lambda);

}  // namespace uda
