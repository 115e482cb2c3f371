#pragma once

#include "uda/alignment.hpp"
#include "uda/datagen.hpp"
#include "uda/model.hpp"
#include "uda/types.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace uda {

/// Everything a run needs, with the pipeline's default values. Loadable from
/// a `key = value` text file (one pair per line, `#` starts a comment).
struct RunConfig {
  // data source
  std::string data_mode = "synthetic";  // synthetic | csv
  std::string synthetic = "gaussian";   // gaussian | moons
  std::string source_csv;
  std::string target_csv;
  std::string checkpoint;  // optional pretrained weights; skips pretraining
  int num_classes = 4;
  int dim = 2;
  double rotation_deg = 30.0;
  std::vector<double> translation{1.0, -0.6};  // empty = zero shift
  double class_sep = 2.0;
  double noise_std = 0.5;
  int samples_per_class_source = 200;
  int samples_per_class_target = 200;

  // network / optimizer
  std::vector<int> hidden_sizes{32, 16};
  // The target-only network used for refinement. Kept deliberately small so
  // its confidence reflects cluster structure rather than memorized labels.
  std::vector<int> aux_hidden_sizes{16};
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double eta0_extractor = 0.001;
  double eta0_classifier = 0.01;
  double lr_alpha = 10.0;
  double lr_beta = 0.75;

  // schedule
  int pretrain_epochs = 30;
  int outer_iterations = 20;
  int align_epochs = 5;
  int batch_size = 64;

  // pseudo-label refinement
  double sp_lambda = 0.1;
  double sp_gamma = 1.3;
  int n_max = 10;

  // alignment
  double tau1 = 0.3;
  double tau2 = 0.3;
  double centroid_alpha = 1.0;
  int k_b = 4;  // classes per batch, clamped to the eligible class count
  int n_src_per_class = 8;
  int n_tgt_per_class = 8;
  std::string kernel = "median";  // median | fixed
  double sigma = 1.0;             // used when kernel = fixed

  // clustering
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;

  // ablation switches
  bool no_refinement = false;
  bool no_confidence_check = false;
  std::string pseudo_source = "oa";  // oa | net
  std::string loss = "da";           // da | c2c | p2p | ce_hard

  std::uint64_t seed = 0;

  KernelSpec kernel_spec() const;
};

// Defaults overridden by the file's key = value pairs. Unknown keys and
// unparsable values are configuration errors naming the line.
RunConfig load_config(const std::string& path);

void validate(const RunConfig& config);

/// Append-only JSONL sink; every record is flushed immediately so partial
/// logs survive aborted runs. Default-constructed writers discard records.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path);

  void write(const nlohmann::ordered_json& record);

 private:
  std::ofstream out_;
};

struct DomainPair {
  LabeledSet source;
  UnlabeledSet target;
};

// Generates or loads the configured source/target pair.
DomainPair make_dataset(const RunConfig& config);

struct Evaluation {
  double accuracy = 0.0;
  Matrix confusion;  // rows true class, columns predicted, counts
};

// Argmax class per row, ties to the lowest class index.
IntVector predict(const NetworkParams& params, const Matrix& features);

Evaluation evaluate(const NetworkParams& params, const Matrix& features,
                    const IntVector& labels, int num_classes);

// Fraction of positions where the two label vectors agree.
double label_accuracy(const IntVector& predicted, const IntVector& truth);

// Supervised source-only training of a fresh network (the initialization
// step). Emits one record per epoch when metrics is non-null.
NetworkParams pretrain(const RunConfig& config, const LabeledSet& source,
                       MetricsWriter* metrics);

struct RunResult {
  double source_only_source_acc = 0.0;
  double source_only_target_acc = 0.0;  // NaN when hidden labels are absent
  double final_source_acc = 0.0;
  double final_target_acc = 0.0;
  double final_pseudo_acc_full = 0.0;      // last iteration, whole target set
  double final_pseudo_acc_filtered = 0.0;  // last iteration, confident subset
  int final_filtered_size = 0;
  NetworkParams params;
};

/// Full adaptation run: pretraining, then per outer iteration (a) cluster +
/// match target clusters to source classes for pseudo-labels, (b) self-paced
/// refinement and confidence filtering, (c) class-aware alignment steps.
/// With a non-empty out_dir writes metrics.jsonl, confusion.csv,
/// checkpoint.bin, and summary.txt there.
RunResult run(const RunConfig& config, const std::string& out_dir);

struct AblationRow {
  std::string name;
  RunResult result;
};

/// Runs the ablation matrix (or, with sweep_tau, the tau1 = tau2 sweep over
/// {0.05, 0.1, 0.3, 0.6, 1.0}) and writes a comparison table to
/// out_dir/summary.txt when out_dir is non-empty.
std::vector<AblationRow> ablate(const RunConfig& base,
                                const std::string& out_dir, bool sweep_tau);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace uda
