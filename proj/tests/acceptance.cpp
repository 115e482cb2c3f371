// Acceptance suite for the adaptation pipeline. Each numbered criterion
// prints exactly one [PASS]/[FAIL] line; the process exits nonzero if any
// criterion fails. Criteria with a runtime budget fail when they exceed it.

#include "uda/alignment.hpp"
#include "uda/assignment.hpp"
#include "uda/clustering.hpp"
#include "uda/datagen.hpp"
#include "uda/model.hpp"
#include "uda/pipeline.hpp"
#include "uda/refinement.hpp"
#include "uda/types.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace uda;
namespace fs = std::filesystem;

namespace {

// Benchmark margins measured at the first successful run, kept as regression
// guards with a +/-2 percentage point band. NaN disables the band (first run).
constexpr double kFrozenGain = 0.1800;            // full minus source-only
constexpr double kFrozenRefinementEdge = 0.0325;  // full minus no-refinement
constexpr double kFrozenFilterEdge = 0.0153;    // filtered vs full pseudo acc
constexpr double kFrozenMatchingEdge = 0.3212;  // matched vs argmax pseudo acc
constexpr double kMarginBand = 0.02;

int g_failed = 0;

class Criterion {
 public:
  Criterion(int number, const std::string& name, double budget_seconds = 0.0)
      : number_(number), name_(name), budget_(budget_seconds),
        start_(std::chrono::steady_clock::now()) {}

  void expect(bool ok, const std::string& what) {
    if (!ok) problems_.push_back(what);
  }

  void note(const std::string& text) { notes_.push_back(text); }

  // Prints the single [PASS]/[FAIL] line and reports the verdict.
  bool finish() {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    if (budget_ > 0.0 && elapsed > budget_) {
      std::ostringstream over;
      over << "runtime " << elapsed << "s exceeds budget " << budget_ << "s";
      problems_.push_back(over.str());
    }
    const bool ok = problems_.empty();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << number_ << ": "
              << name_;
    std::cout << " (" << std::fixed << std::setprecision(2) << elapsed << "s";
    if (budget_ > 0.0) std::cout << " / budget " << budget_ << "s";
    std::cout << ")" << std::defaultfloat;
    for (const std::string& note : notes_) std::cout << " | " << note;
    std::cout << '\n';
    for (const std::string& problem : problems_)
      std::cout << "       - " << problem << '\n';
    if (!ok) ++g_failed;
    return ok;
  }

 private:
  int number_;
  std::string name_;
  double budget_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> problems_;
  std::vector<std::string> notes_;
};

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols,
                     std::mt19937_64& rng, double spread = 1.0) {
  std::normal_distribution<double> dist(0.0, spread);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<unreadable:" + path + ">";
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::string percent(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << 100.0 * v << "%";
  return out.str();
}

// --------------------------------------------------------------------------
// 1. Optimal cluster-class matching against exhaustive search.
void criterion_matching() {
  Criterion crit(1, "matching equals brute force on 200 cost matrices", 5.0);
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> cost_dist(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + trial % 6;
    Matrix cost(k, k);
    for (Eigen::Index i = 0; i < cost.rows(); ++i)
      for (Eigen::Index j = 0; j < cost.cols(); ++j) cost(i, j) = cost_dist(rng);
    const Assignment fast = hungarian(cost);
    const oracle::BruteMatch brute = oracle::brute_force_match(cost);
    if (fast.total_cost != brute.total) {
      std::ostringstream what;
      what << "trial " << trial << " (K=" << k << "): solver total "
           << fast.total_cost << " != brute-force total " << brute.total;
      crit.expect(false, what.str());
      break;
    }
  }
  crit.finish();
}

// --------------------------------------------------------------------------
// 2. Analytic gradients of every training loss against central differences.
void criterion_gradients() {
  Criterion crit(2, "analytic gradients match finite differences", 30.0);
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> dim_dist(2, 4);
  std::uniform_int_distribution<int> hidden_dist(4, 6);
  std::uniform_int_distribution<int> class_dist(2, 4);
  KernelSpec fixed;
  fixed.mode = BandwidthMode::kFixed;
  fixed.sigma = 1.0;

  double worst = 0.0;
  std::string worst_loss;
  const auto record = [&](const char* label, double err) {
    if (err > worst) {
      worst = err;
      worst_loss = label;
    }
  };

  for (int trial = 0; trial < 20; ++trial) {
    const int dim = dim_dist(rng);
    const int classes = class_dist(rng);
    const NetworkParams params = init_network(
        dim, {hidden_dist(rng), hidden_dist(rng)}, classes, 3000 + trial);

    // A balanced class batch with two samples per class on each side.
    ClassBatch batch;
    for (int k = 0; k < classes; ++k) batch.classes.push_back(k);
    const int per_class = 2;
    batch.source_x = random_matrix(classes * per_class, dim, rng);
    batch.target_x = random_matrix(classes * per_class, dim, rng);
    batch.source_y = IntVector(classes * per_class);
    batch.target_y = IntVector(classes * per_class);
    for (int r = 0; r < classes * per_class; ++r) {
      batch.source_y(r) = r / per_class;
      batch.target_y(r) = r / per_class;
    }

    // Source cross-entropy alone.
    {
      const ForwardTrace trace = forward(params, batch.source_x);
      const NetworkParams analytic = backward(
          params, trace, cross_entropy_dlogits(trace, batch.source_y),
          Matrix());
      NetworkParams fd = oracle::fd_gradients(params, [&](const NetworkParams& p) {
        return cross_entropy(forward(p, batch.source_x), batch.source_y);
      });
      NetworkParams a = analytic;
      record("cross-entropy", oracle::max_rel_error(a, fd));
    }

    // Feature-space and probability-space discrepancies, each isolated by
    // zeroing the other weight, and the full composite.
    const auto check_weighted = [&](const char* label, double tau1,
                                    double tau2) {
      const LossBreakdown analytic = total_loss(params, batch, tau1, tau2,
                                                fixed);
      NetworkParams fd = oracle::fd_gradients(params, [&](const NetworkParams& p) {
        return total_loss(p, batch, tau1, tau2, fixed).total;
      });
      NetworkParams a = analytic.grads;
      record(label, oracle::max_rel_error(a, fd));
    };
    check_weighted("feature discrepancy", 0.7, 0.0);
    check_weighted("probability discrepancy", 0.0, 0.9);
    check_weighted("composite", 0.4, 0.6);

    // Self-paced data term: mean NLL over a frozen selection mask.
    {
      const Matrix& x = batch.target_x;
      const IntVector& y = batch.target_y;
      SelfPacedSchedule sched;
      sched.n = 6;  // wide enough that a fresh net keeps a few samples
      const SelectionMask mask = select(per_sample_nll(params, x, y), sched);
      const double n_total = static_cast<double>(x.rows());

      const ForwardTrace trace = forward(params, x);
      Matrix dlogits = Matrix::Zero(trace.logits.rows(), trace.logits.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (mask.v(i) == 0) continue;
        dlogits.row(i) = trace.probs.row(i) / n_total;
        dlogits(i, y(i)) -= 1.0 / n_total;
      }
      const NetworkParams analytic = backward(params, trace, dlogits, Matrix());
      NetworkParams fd = oracle::fd_gradients(params, [&](const NetworkParams& p) {
        const Vector nlls = per_sample_nll(p, x, y);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < nlls.size(); ++i)
          if (mask.v(i) == 1) loss += nlls(i) - sched.threshold();
        return loss / n_total;
      });
      NetworkParams a = analytic;
      record("self-paced data term", oracle::max_rel_error(a, fd));
    }
  }

  std::ostringstream note;
  note << "worst rel err " << std::scientific << std::setprecision(2) << worst
       << " (" << worst_loss << ")";
  crit.note(note.str());
  crit.expect(worst < 1e-4, "max relative error " + std::to_string(worst) +
                                " is not < 1e-4 (" + worst_loss + ")");
  crit.finish();
}

// --------------------------------------------------------------------------
// 3. Kernel discrepancy losses against an independent double-loop sum.
void criterion_mmd_oracle() {
  Criterion crit(3, "discrepancy losses match the double-loop reference");
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<int> rows_dist(2, 10);
  std::uniform_int_distribution<int> label_dist(0, 2);
  KernelSpec median;

  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 2 + trial % 3;
    ClassBatch batch;
    batch.classes = {0, 1, 2};
    const int ns = 3 * rows_dist(rng) / 2 + 3;
    const int nt = 3 * rows_dist(rng) / 2 + 3;
    batch.source_y = IntVector(ns);
    batch.target_y = IntVector(nt);
    for (int i = 0; i < ns; ++i) batch.source_y(i) = label_dist(rng);
    for (int i = 0; i < nt; ++i) batch.target_y(i) = label_dist(rng);
    const Matrix src = random_matrix(ns, dim, rng);
    const Matrix tgt = random_matrix(nt, dim, rng);

    Matrix stacked(ns + nt, dim);
    stacked << src, tgt;
    const double sigma = resolve_bandwidth(median, stacked);
    const double via_loss = trial % 2 == 0
                                ? c2c_loss(batch, src, tgt, median)
                                : p2p_loss(batch, src, tgt, median);
    const double via_oracle = oracle::class_mmd_oracle(
        batch.classes, batch.source_y, src, batch.target_y, tgt, sigma);
    worst = std::max(worst, std::abs(via_loss - via_oracle));
  }
  std::ostringstream note;
  note << "worst |diff| " << std::scientific << std::setprecision(2) << worst;
  crit.note(note.str());
  crit.expect(worst <= 1e-12, "loss vs reference diverged by " +
                                  std::to_string(worst) + " (> 1e-12)");

  // Identical multisets: the biased estimate must vanish.
  double worst_zero = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(rows_dist(rng) + 2, 3, rng);
    ClassBatch batch;
    batch.classes = {0};
    batch.source_y = IntVector::Zero(x.rows());
    batch.target_y = IntVector::Zero(x.rows());
    worst_zero =
        std::max(worst_zero, std::abs(c2c_loss(batch, x, x, median)));
    worst_zero =
        std::max(worst_zero, std::abs(p2p_loss(batch, x, x, median)));
  }
  crit.expect(worst_zero <= 1e-12,
              "identical multisets gave nonzero discrepancy " +
                  std::to_string(worst_zero));
  crit.finish();
}

// --------------------------------------------------------------------------
// 4. Closed-form sample selection against exhaustive mask search.
void criterion_selection() {
  Criterion crit(4, "self-paced selection is the exact minimizer");
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> nll_dist(0.0, 1.5);
  std::uniform_int_distribution<int> size_dist(1, 12);
  std::uniform_int_distribution<int> n_dist(0, 10);

  for (int trial = 0; trial < 100; ++trial) {
    const int n = size_dist(rng);
    Vector nlls(n);
    for (int i = 0; i < n; ++i) nlls(i) = nll_dist(rng);
    SelfPacedSchedule sched;
    sched.n = n_dist(rng);
    const double mine = self_paced_loss(nlls, select(nlls, sched), sched);
    const double best =
        oracle::brute_force_selection_min(nlls, sched.threshold());
    if (std::abs(mine - best) > 1e-12) {
      std::ostringstream what;
      what << "instance " << trial << ": selection loss " << mine
           << " vs exhaustive minimum " << best;
      crit.expect(false, what.str());
      break;
    }
  }

  // The kept set can only grow as the schedule loosens.
  bool monotone = true;
  for (int trial = 0; trial < 20 && monotone; ++trial) {
    Vector nlls(20);
    for (int i = 0; i < 20; ++i) nlls(i) = nll_dist(rng);
    SelfPacedSchedule sched;
    SelectionMask prev = select(nlls, sched);
    for (sched.n = 1; sched.n <= sched.n_max; ++sched.n) {
      const SelectionMask cur = select(nlls, sched);
      for (Eigen::Index i = 0; i < nlls.size(); ++i)
        if (prev.v(i) > cur.v(i)) monotone = false;
      prev = cur;
    }
  }
  crit.expect(monotone, "a sample left the selection as n increased");
  crit.finish();
}

// --------------------------------------------------------------------------
// 5. Clustering against an independent Lloyd implementation, exactly.
void criterion_kmeans() {
  Criterion crit(5, "k-means matches the reference Lloyd run exactly");
  std::mt19937_64 rng(5005);
  std::uniform_int_distribution<int> n_dist(20, 200);
  std::uniform_int_distribution<int> k_dist(2, 5);
  std::uniform_int_distribution<int> d_dist(2, 3);

  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_dist(rng);
    const int k = k_dist(rng);
    const int d = d_dist(rng);
    const Matrix x = random_matrix(n, d, rng, 2.0);
    CentroidSet init;
    init.centroids = random_matrix(k, d, rng, 2.0);
    init.counts = IntVector::Zero(k);

    const KmeansResult mine = kmeans(x, init, 100, 1e-6);
    const oracle::LloydResult ref =
        oracle::reference_lloyd(x, init.centroids, 100, 1e-6);
    const bool same = mine.assignment == ref.assignment &&
                      mine.means == ref.means &&
                      mine.iterations == ref.iterations;
    if (!same) {
      std::ostringstream what;
      what << "instance " << trial << " (N=" << n << ", K=" << k << ", d=" << d
           << ") diverged from the reference";
      crit.expect(false, what.str());
      break;
    }
  }
  crit.finish();
}

// --------------------------------------------------------------------------
// 6. End-to-end benchmark: rotated 4-class Gaussians, seed 7.
void criterion_benchmark() {
  Criterion crit(6, "synthetic benchmark reproduces the ablation directions",
                 180.0);
  RunConfig config;  // defaults are the benchmark settings
  config.seed = 7;

  const RunResult full = run(config, "");
  RunConfig no_ref = config;
  no_ref.no_refinement = true;
  const RunResult without_refinement = run(no_ref, "");
  RunConfig net = config;
  net.pseudo_source = "net";
  const RunResult argmax_labels = run(net, "");

  const double gain = full.final_target_acc - full.source_only_target_acc;
  const double refinement_edge =
      full.final_target_acc - without_refinement.final_target_acc;
  const double filter_edge =
      full.final_pseudo_acc_filtered - full.final_pseudo_acc_full;
  const double matching_edge =
      full.final_pseudo_acc_full - argmax_labels.final_pseudo_acc_full;

  std::ostringstream note;
  note << "source-only " << percent(full.source_only_target_acc) << ", full "
       << percent(full.final_target_acc) << "; edges: gain " << percent(gain)
       << ", refinement " << percent(refinement_edge) << ", filter "
       << percent(filter_edge) << ", matching " << percent(matching_edge);
  crit.note(note.str());

  const auto check_margin = [&](const char* label, double value,
                                double minimum, double frozen) {
    std::ostringstream what;
    if (!(value >= minimum - 1e-9)) {
      what << label << " margin " << percent(value) << " is below "
           << percent(minimum);
      crit.expect(false, what.str());
    } else if (std::isfinite(frozen) &&
               std::abs(value - frozen) > kMarginBand + 1e-12) {
      what << label << " margin " << percent(value)
           << " drifted more than 2pp from the frozen " << percent(frozen);
      crit.expect(false, what.str());
    }
  };
  check_margin("(a) adaptation gain", gain, 0.10, kFrozenGain);
  check_margin("(b) refinement", refinement_edge, 0.0, kFrozenRefinementEdge);
  check_margin("(c) confidence filter", filter_edge, 0.0, kFrozenFilterEdge);
  check_margin("(d) cluster matching", matching_edge, 0.0,
               kFrozenMatchingEdge);
  crit.expect(std::isfinite(full.final_pseudo_acc_filtered),
              "confidence filter kept no samples in the final iteration");
  crit.finish();
}

// --------------------------------------------------------------------------
// 7. Loss-weight sensitivity sweep emits the five-row summary.
void criterion_tau_sweep() {
  Criterion crit(7, "tau sweep runs all five weights");
  RunConfig config;
  config.seed = 7;
  const fs::path dir = fs::temp_directory_path() / "uda_acceptance_sweep";
  fs::remove_all(dir);
  const std::vector<AblationRow> rows = ablate(config, dir.string(), true);

  crit.expect(rows.size() == 5,
              "expected 5 sweep rows, got " + std::to_string(rows.size()));
  for (const AblationRow& row : rows) {
    crit.expect(row.name.rfind("tau_", 0) == 0,
                "unexpected sweep row name " + row.name);
    crit.expect(std::isfinite(row.result.final_target_acc),
                row.name + " produced a non-finite final accuracy");
  }
  crit.expect(fs::exists(dir / "summary.txt"), "sweep summary.txt missing");
  const bool ok = crit.finish();
  if (ok) std::cout << ablation_table(rows);
  fs::remove_all(dir);
}

// --------------------------------------------------------------------------
// 8. Bitwise determinism of the metrics stream.
void criterion_determinism() {
  Criterion crit(8, "identical runs write byte-identical metrics");
  RunConfig config;
  config.seed = 7;
  const fs::path dir = fs::temp_directory_path() / "uda_acceptance_repro";
  fs::remove_all(dir);
  run(config, (dir / "a").string());
  run(config, (dir / "b").string());
  const std::string a = read_bytes((dir / "a" / "metrics.jsonl").string());
  const std::string b = read_bytes((dir / "b" / "metrics.jsonl").string());
  crit.expect(!a.empty() && a[0] == '{', "first run wrote no metrics");
  crit.expect(a == b, "metrics.jsonl differs between identical runs");
  crit.finish();
  fs::remove_all(dir);
}

}  // namespace

int main() {
  std::cout << "acceptance suite: class-aware unsupervised domain adaptation"
            << '\n';
  criterion_matching();
  criterion_gradients();
  criterion_mmd_oracle();
  criterion_selection();
  criterion_kmeans();
  criterion_benchmark();
  criterion_tau_sweep();
  criterion_determinism();

  if (g_failed == 0) {
    std::cout << "all 8 criteria passed\n";
    return 0;
  }
  std::cout << g_failed << " of 8 criteria FAILED\n";
  return 1;
}
