#include "uda/pipeline.hpp"

#include "uda/assignment.hpp"
#include "uda/clustering.hpp"
#include "uda/refinement.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace uda {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed sub-streams so every randomized phase draws independently.
constexpr std::uint64_t kSeedData = 0;
constexpr std::uint64_t kSeedNetInit = 1;
constexpr std::uint64_t kSeedPretrain = 2;
constexpr std::uint64_t kSeedAuxInit = 3;
constexpr std::uint64_t kSeedRefineBase = 100;
constexpr std::uint64_t kSeedAlignBase = 1000;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" +
                      value + "'");
  }
}

int to_int(const std::string& value, const std::string& key) {
  int v = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': cannot parse integer '" +
                      value + "'");
  return v;
}

std::uint64_t to_u64(const std::string& value, const std::string& key) {
  std::uint64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': cannot parse seed '" + value +
                      "'");
  return v;
}

bool to_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    value + "'");
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value,
               int line) {
  if (key == "data_mode") c.data_mode = value;
  else if (key == "synthetic") c.synthetic = value;
  else if (key == "source_csv") c.source_csv = value;
  else if (key == "target_csv") c.target_csv = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "num_classes") c.num_classes = to_int(value, key);
  else if (key == "dim") c.dim = to_int(value, key);
  else if (key == "rotation_deg") c.rotation_deg = to_double(value, key);
  else if (key == "translation") {
    c.translation.clear();
    for (const std::string& part : split_commas(value))
      c.translation.push_back(to_double(part, key));
  } else if (key == "class_sep") c.class_sep = to_double(value, key);
  else if (key == "noise_std") c.noise_std = to_double(value, key);
  else if (key == "samples_per_class_source")
    c.samples_per_class_source = to_int(value, key);
  else if (key == "samples_per_class_target")
    c.samples_per_class_target = to_int(value, key);
  else if (key == "hidden_sizes") {
    c.hidden_sizes.clear();
    for (const std::string& part : split_commas(value))
      c.hidden_sizes.push_back(to_int(part, key));
  } else if (key == "aux_hidden_sizes") {
    c.aux_hidden_sizes.clear();
    for (const std::string& part : split_commas(value))
      c.aux_hidden_sizes.push_back(to_int(part, key));
  } else if (key == "momentum") c.momentum = to_double(value, key);
  else if (key == "weight_decay") c.weight_decay = to_double(value, key);
  else if (key == "eta0_extractor") c.eta0_extractor = to_double(value, key);
  else if (key == "eta0_classifier") c.eta0_classifier = to_double(value, key);
  else if (key == "lr_alpha") c.lr_alpha = to_double(value, key);
  else if (key == "lr_beta") c.lr_beta = to_double(value, key);
  else if (key == "pretrain_epochs") c.pretrain_epochs = to_int(value, key);
  else if (key == "outer_iterations") c.outer_iterations = to_int(value, key);
  else if (key == "align_epochs") c.align_epochs = to_int(value, key);
  else if (key == "batch_size") c.batch_size = to_int(value, key);
  else if (key == "lambda") c.sp_lambda = to_double(value, key);
  else if (key == "gamma") c.sp_gamma = to_double(value, key);
  else if (key == "n_max") c.n_max = to_int(value, key);
  else if (key == "tau1") c.tau1 = to_double(value, key);
  else if (key == "tau2") c.tau2 = to_double(value, key);
  else if (key == "centroid_alpha") c.centroid_alpha = to_double(value, key);
  else if (key == "k_b") c.k_b = to_int(value, key);
  else if (key == "n_src_per_class") c.n_src_per_class = to_int(value, key);
  else if (key == "n_tgt_per_class") c.n_tgt_per_class = to_int(value, key);
  else if (key == "kernel") c.kernel = value;
  else if (key == "sigma") c.sigma = to_double(value, key);
  else if (key == "kmeans_max_iters") c.kmeans_max_iters = to_int(value, key);
  else if (key == "kmeans_tol") c.kmeans_tol = to_double(value, key);
  else if (key == "no_refinement") c.no_refinement = to_bool(value, key);
  else if (key == "no_confidence_check")
    c.no_confidence_check = to_bool(value, key);
  else if (key == "pseudo_source") c.pseudo_source = value;
  else if (key == "loss") c.loss = value;
  else if (key == "seed") c.seed = to_u64(value, key);
  else
    throw ConfigError("unknown config key '" + key + "' at line " +
                      std::to_string(line));
}

nlohmann::ordered_json num_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

// Prefix any data/config failure with the pipeline stage it happened in.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + std::string(name) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + std::string(name) + ": " + e.what());
  }
}

OptimizerState make_optimizer_from(const RunConfig& config,
                                   const NetworkParams& params) {
  OptimizerState opt = make_optimizer(params);
  opt.momentum = config.momentum;
  opt.weight_decay = config.weight_decay;
  opt.eta0_extractor = config.eta0_extractor;
  opt.eta0_classifier = config.eta0_classifier;
  opt.alpha_sched = config.lr_alpha;
  opt.beta_sched = config.lr_beta;
  return opt;
}

// One pass of shuffled mini-batch CE training.
void ce_epoch(NetworkParams& params, const Matrix& features,
              const IntVector& labels, int batch_size, OptimizerState& opt,
              std::mt19937_64& rng) {
  std::vector<int> order(features.rows());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    Matrix batch(stop - start, features.cols());
    IntVector batch_labels(stop - start);
    for (std::size_t b = start; b < stop; ++b) {
      batch.row(b - start) = features.row(order[b]);
      batch_labels(b - start) = labels(order[b]);
    }
    const ForwardTrace trace = forward(params, batch);
    const NetworkParams grads = backward(
        params, trace, cross_entropy_dlogits(trace, batch_labels), Matrix());
    sgd_step(params, grads, opt);
  }
}

// Hard pseudo-label cross-entropy on the batch's target side, the drop-in
// replacement for the discrepancy terms in the ce_hard ablation.
LossBreakdown pseudo_ce_loss(const NetworkParams& params,
                             const ClassBatch& batch) {
  const ForwardTrace tgt = forward(params, batch.target_x);
  LossBreakdown out;
  out.total = cross_entropy(tgt, batch.target_y);
  out.grads = backward(params, tgt,
                       cross_entropy_dlogits(tgt, batch.target_y), Matrix());
  return out;
}

// Cross-entropy value and gradients on a uniformly drawn source mini-batch.
// The supervised term covers the whole source set, so it is sampled
// independently of the class-matched discrepancy batch.
double source_ce_grads(const NetworkParams& params, const LabeledSet& source,
                       int batch_size, std::uint64_t seed,
                       NetworkParams* grads) {
  std::vector<int> order(source.features.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t rows =
      std::min(order.size(), static_cast<std::size_t>(batch_size));
  Matrix batch(rows, source.features.cols());
  IntVector labels(rows);
  for (std::size_t b = 0; b < rows; ++b) {
    batch.row(b) = source.features.row(order[b]);
    labels(b) = source.labels(order[b]);
  }
  const ForwardTrace trace = forward(params, batch);
  *grads = backward(params, trace, cross_entropy_dlogits(trace, labels),
                    Matrix());
  return cross_entropy(trace, labels);
}

void write_confusion_csv(const std::string& path, const Matrix& confusion) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) {
      if (j > 0) out << ',';
      out << static_cast<long long>(confusion(i, j));
    }
    out << '\n';
  }
}

std::string summary_text(const RunResult& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "source_only_source_acc " << r.source_only_source_acc << '\n';
  out << "source_only_target_acc " << r.source_only_target_acc << '\n';
  out << "final_source_acc       " << r.final_source_acc << '\n';
  out << "final_target_acc       " << r.final_target_acc << '\n';
  out << "pseudo_acc_full        " << r.final_pseudo_acc_full << '\n';
  out << "pseudo_acc_filtered    " << r.final_pseudo_acc_filtered << '\n';
  out << "filtered_size          " << r.final_filtered_size << '\n';
  return out.str();
}

}  // namespace

KernelSpec RunConfig::kernel_spec() const {
  KernelSpec spec;
  spec.mode = kernel == "fixed" ? BandwidthMode::kFixed : BandwidthMode::kMedian;
  spec.sigma = sigma;
  return spec;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " +
                        std::to_string(lineno) + " of " + path);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty key at line " + std::to_string(lineno) +
                        " of " + path);
    apply_key(config, key, value, lineno);
  }
  return config;
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.data_mode == "synthetic" || c.data_mode == "csv",
          "data_mode must be synthetic or csv");
  require(c.synthetic == "gaussian" || c.synthetic == "moons",
          "synthetic must be gaussian or moons");
  if (c.data_mode == "csv") {
    require(!c.source_csv.empty() && !c.target_csv.empty(),
            "csv mode needs source_csv and target_csv");
  } else {
    require(c.num_classes >= 2, "num_classes must be >= 2");
    require(c.dim >= 2, "dim must be >= 2");
    require(c.class_sep > 0.0, "class_sep must be > 0");
    require(c.noise_std >= 0.0, "noise_std must be >= 0");
    require(c.samples_per_class_source >= 1 &&
                c.samples_per_class_target >= 1,
            "samples per class must be >= 1");
    if (c.synthetic == "moons")
      require(c.num_classes == 2, "moons data has exactly 2 classes");
  }
  require(!c.hidden_sizes.empty(), "hidden_sizes must not be empty");
  for (int h : c.hidden_sizes) require(h >= 1, "hidden sizes must be >= 1");
  require(!c.aux_hidden_sizes.empty(), "aux_hidden_sizes must not be empty");
  for (int h : c.aux_hidden_sizes)
    require(h >= 1, "aux hidden sizes must be >= 1");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must be in [0,1)");
  require(c.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(c.eta0_extractor > 0.0 && c.eta0_classifier > 0.0,
          "learning rates must be > 0");
  require(c.lr_alpha >= 0.0 && c.lr_beta >= 0.0,
          "lr schedule constants must be >= 0");
  require(c.pretrain_epochs >= 0, "pretrain_epochs must be >= 0");
  require(c.outer_iterations >= 0, "outer_iterations must be >= 0");
  require(c.align_epochs >= 1, "align_epochs must be >= 1");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.sp_lambda > 0.0, "lambda must be > 0");
  require(c.sp_gamma > 1.0, "gamma must be > 1");
  require(c.n_max >= 0, "n_max must be >= 0");
  require(c.tau1 >= 0.0 && c.tau2 >= 0.0, "tau weights must be >= 0");
  require(c.centroid_alpha >= 0.0, "centroid_alpha must be >= 0");
  require(c.k_b >= 1, "k_b must be >= 1");
  require(c.n_src_per_class >= 1 && c.n_tgt_per_class >= 1,
          "per-class sample counts must be >= 1");
  require(c.kernel == "median" || c.kernel == "fixed",
          "kernel must be median or fixed");
  if (c.kernel == "fixed") require(c.sigma > 0.0, "sigma must be > 0");
  require(c.kmeans_max_iters >= 1, "kmeans_max_iters must be >= 1");
  require(c.kmeans_tol > 0.0, "kmeans_tol must be > 0");
  require(c.pseudo_source == "oa" || c.pseudo_source == "net",
          "pseudo_source must be oa or net");
  require(c.loss == "da" || c.loss == "c2c" || c.loss == "p2p" ||
              c.loss == "ce_hard",
          "loss must be da, c2c, p2p, or ce_hard");
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path) {
  if (!out_) throw DataError("cannot open metrics file: " + path);
}

void MetricsWriter::write(const nlohmann::ordered_json& record) {
  if (!out_.is_open()) return;
  out_ << record.dump() << '\n';
  out_.flush();
}

DomainPair make_dataset(const RunConfig& config) {
  DomainPair pair;
  if (config.data_mode == "csv") {
    pair.source = load_labeled_csv(config.source_csv);
    pair.target = load_unlabeled_csv(config.target_csv);
  } else if (config.synthetic == "moons") {
    std::tie(pair.source, pair.target) = generate_two_moons_pair(
        config.noise_std, config.rotation_deg,
        2 * config.samples_per_class_source,
        2 * config.samples_per_class_target,
        derive_seed(config.seed, kSeedData));
  } else {
    ShiftSpec spec;
    spec.rotation_deg = config.rotation_deg;
    if (!config.translation.empty()) {
      if (static_cast<int>(config.translation.size()) != config.dim)
        throw ConfigError("translation must have one entry per dimension");
      spec.translation = Eigen::Map<const Vector>(
          config.translation.data(),
          static_cast<Eigen::Index>(config.translation.size()));
    }
    spec.class_sep = config.class_sep;
    spec.noise_std = config.noise_std;
    spec.samples_per_class_source = config.samples_per_class_source;
    spec.samples_per_class_target = config.samples_per_class_target;
    std::tie(pair.source, pair.target) =
        generate_gaussian_pair(spec, config.num_classes, config.dim,
                               derive_seed(config.seed, kSeedData));
  }
  validate(pair.source);
  validate(pair.target, pair.source.num_classes);
  return pair;
}

IntVector predict(const NetworkParams& params, const Matrix& features) {
  const ForwardTrace trace = forward(params, features);
  IntVector out(trace.probs.rows());
  for (Eigen::Index i = 0; i < trace.probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < trace.probs.cols(); ++k)
      if (trace.probs(i, k) > trace.probs(i, best))
        best = static_cast<int>(k);
    out(i) = best;
  }
  return out;
}

Evaluation evaluate(const NetworkParams& params, const Matrix& features,
                    const IntVector& labels, int num_classes) {
  if (labels.size() != features.rows())
    throw DataError("labels do not cover the evaluated set");
  const IntVector predictions = predict(params, features);
  Evaluation eval;
  eval.confusion = Matrix::Zero(num_classes, num_classes);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= num_classes)
      throw DataError("evaluation label out of range at row " +
                      std::to_string(i));
    eval.confusion(labels(i), predictions(i)) += 1.0;
  }
  eval.accuracy = eval.confusion.trace() / static_cast<double>(labels.size());
  return eval;
}

double label_accuracy(const IntVector& predicted, const IntVector& truth) {
  if (predicted.size() != truth.size())
    throw DataError("label vectors have different lengths");
  if (predicted.size() == 0) return 0.0;
  return (predicted.array() == truth.array()).cast<double>().sum() /
         static_cast<double>(predicted.size());
}

NetworkParams pretrain(const RunConfig& config, const LabeledSet& source,
                       MetricsWriter* metrics) {
  NetworkParams params = init_network(
      static_cast<int>(source.features.cols()), config.hidden_sizes,
      source.num_classes, derive_seed(config.seed, kSeedNetInit));
  OptimizerState opt = make_optimizer_from(config, params);
  std::mt19937_64 rng(derive_seed(config.seed, kSeedPretrain));
  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    ce_epoch(params, source.features, source.labels, config.batch_size, opt,
             rng);
    if (metrics != nullptr) {
      const double ce =
          cross_entropy(forward(params, source.features), source.labels);
      metrics->write({{"stage", "pretrain"},
                      {"epoch", epoch},
                      {"ce", num_or_null(ce)}});
    }
  }
  return params;
}

RunResult run(const RunConfig& config, const std::string& out_dir) {
  validate(config);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  MetricsWriter metrics_storage;
  MetricsWriter* metrics = nullptr;
  if (!out_dir.empty()) {
    metrics_storage = MetricsWriter(out_dir + "/metrics.jsonl");
    metrics = &metrics_storage;
  }

  const DomainPair data = stage("data", [&] { return make_dataset(config); });
  const LabeledSet& source = data.source;
  const UnlabeledSet& target = data.target;
  const int num_classes = source.num_classes;
  const bool scored = target.has_hidden_labels();

  RunResult result;
  result.params = stage("pretrain", [&] {
    if (!config.checkpoint.empty()) {
      NetworkParams params = load_checkpoint(config.checkpoint);
      if (params.input_dim() != source.features.cols() ||
          params.num_classes() != num_classes)
        throw DataError("checkpoint shape does not match the dataset");
      return params;
    }
    return pretrain(config, source, metrics);
  });
  NetworkParams& params = result.params;

  result.source_only_source_acc =
      evaluate(params, source.features, source.labels, num_classes).accuracy;
  result.source_only_target_acc =
      scored ? evaluate(params, target.features, target.hidden_labels,
                        num_classes)
                   .accuracy
             : kNaN;
  result.final_source_acc = result.source_only_source_acc;
  result.final_target_acc = result.source_only_target_acc;
  result.final_pseudo_acc_full = kNaN;
  result.final_pseudo_acc_filtered = kNaN;
  if (metrics != nullptr)
    metrics->write({{"stage", "source_only"},
                    {"source_acc", num_or_null(result.source_only_source_acc)},
                    {"target_acc", num_or_null(result.source_only_target_acc)}});

  OptimizerState main_opt = make_optimizer_from(config, params);
  NetworkParams aux_params;  // initialized lazily on first refinement
  bool aux_ready = false;
  CentroidSet centroid_cache;
  const int total_align_epochs = config.outer_iterations * config.align_epochs;

  for (int it = 0; it < config.outer_iterations; ++it) {
    // (a) cluster the target embeddings and match clusters to source classes
    PseudoLabelSet pseudo = stage("assign", [&] {
      if (config.pseudo_source == "net") {
        PseudoLabelSet p;
        p.labels = predict(params, target.features);
        p.cluster_of = p.labels;
        if (metrics != nullptr)
          metrics->write(
              {{"stage", "assign"},
               {"iteration", it},
               {"pseudo_source", "net"},
               {"pseudo_acc",
                num_or_null(scored
                                ? label_accuracy(p.labels, target.hidden_labels)
                                : kNaN)}});
        return p;
      }
      const Matrix src_feats = forward(params, source.features).features();
      const Matrix tgt_feats = forward(params, target.features).features();
      const CentroidSet src_cents =
          source_centroids(src_feats, source.labels, num_classes);
      const CentroidSet& init = it == 0 ? src_cents : centroid_cache;
      const KmeansResult km =
          kmeans(tgt_feats, init, config.kmeans_max_iters, config.kmeans_tol);
      centroid_cache = moving_average_update(init, tgt_feats, km.assignment,
                                             config.centroid_alpha);
      const Assignment matching =
          hungarian(build_cost(src_cents, centroid_cache));
      PseudoLabelSet p = assign_pseudolabels(km.assignment, matching);
      if (metrics != nullptr)
        metrics->write(
            {{"stage", "assign"},
             {"iteration", it},
             {"pseudo_source", "oa"},
             {"kmeans_iterations", km.iterations},
             {"assignment_cost", matching.total_cost},
             {"pseudo_acc",
              num_or_null(scored
                              ? label_accuracy(p.labels, target.hidden_labels)
                              : kNaN)}});
      return p;
    });

    // (b) self-paced refinement of the auxiliary network, then keep only the
    // target samples it is confident about
    const FilteredTargetSet filtered = stage("refine", [&] {
      FilteredTargetSet all;
      all.indices.resize(target.features.rows());
      std::iota(all.indices.begin(), all.indices.end(), 0);
      all.pseudo_labels = pseudo.labels;
      if (config.no_refinement) return all;

      if (!aux_ready) {
        aux_params = init_network(static_cast<int>(target.features.cols()),
                                  config.aux_hidden_sizes, num_classes,
                                  derive_seed(config.seed, kSeedAuxInit));
        aux_ready = true;
      }
      SelfPacedSchedule sched;
      sched.lambda = config.sp_lambda;
      sched.gamma = config.sp_gamma;
      sched.n = 0;
      sched.n_max = config.n_max;
      OptimizerState aux_opt = make_optimizer_from(config, aux_params);
      RefineOptions options;
      options.batch_size = config.batch_size;
      options.seed = derive_seed(config.seed,
                                 kSeedRefineBase + static_cast<std::uint64_t>(it));
      const RefineResult refined = refine(aux_params, target.features,
                                          pseudo.labels, sched, aux_opt,
                                          options);
      aux_params = refined.params;
      if (metrics != nullptr)
        for (const RefineEpochStats& s : refined.epochs)
          metrics->write({{"stage", "refine"},
                          {"iteration", it},
                          {"n", s.n},
                          {"threshold", s.threshold},
                          {"selected", s.selected},
                          {"mean_nll", num_or_null(s.mean_nll)}});
      if (config.no_confidence_check) return all;
      return confidence_check(aux_params, target.features, pseudo.labels,
                              config.sp_lambda);
    });

    result.final_pseudo_acc_full =
        scored ? label_accuracy(pseudo.labels, target.hidden_labels) : kNaN;
    result.final_filtered_size = filtered.size();
    if (scored && filtered.size() > 0) {
      IntVector truth(filtered.size());
      for (int i = 0; i < filtered.size(); ++i)
        truth(i) = target.hidden_labels(filtered.indices[i]);
      result.final_pseudo_acc_filtered =
          label_accuracy(filtered.pseudo_labels, truth);
    } else {
      result.final_pseudo_acc_filtered = kNaN;
    }
    if (metrics != nullptr)
      metrics->write(
          {{"stage", "filter"},
           {"iteration", it},
           {"filtered_size", filtered.size()},
           {"pseudo_acc_full", num_or_null(result.final_pseudo_acc_full)},
           {"pseudo_acc_filtered",
            num_or_null(result.final_pseudo_acc_filtered)}});

    // (c) class-aware alignment on the combined objective. One epoch makes
    // enough balanced class batches to cover the target set once; drawing
    // from the filtered pool changes label quality, not optimization budget.
    stage("align", [&] {
      const int k_use = std::min(config.k_b, num_classes);
      const int per_step = k_use * config.n_tgt_per_class;
      const int steps = std::max(
          1, (static_cast<int>(target.features.rows()) + per_step - 1) /
                 per_step);
      for (int e = 0; e < config.align_epochs; ++e) {
        const int global = it * config.align_epochs + e;
        main_opt.t = total_align_epochs > 1
                         ? static_cast<double>(global) /
                               static_cast<double>(total_align_epochs - 1)
                         : 0.0;
        const std::uint64_t epoch_seed = derive_seed(
            config.seed, kSeedAlignBase + static_cast<std::uint64_t>(global));
        double sum_total = 0.0, sum_ce = 0.0, sum_c2c = 0.0, sum_p2p = 0.0;
        int taken = 0;
        for (int s = 0; s < steps; ++s) {
          const auto batch = sample_class_batch(
              source, target.features, filtered, k_use,
              config.n_src_per_class, config.n_tgt_per_class,
              derive_seed(epoch_seed, 2 * static_cast<std::uint64_t>(s)));
          // No class survives on both sides; retrying cannot change that.
          if (!batch.has_value()) break;
          LossBreakdown loss;
          if (config.loss == "ce_hard") {
            loss = pseudo_ce_loss(params, *batch);
          } else {
            const double tau1 = config.loss == "p2p" ? 0.0 : config.tau1;
            const double tau2 = config.loss == "c2c" ? 0.0 : config.tau2;
            loss = discrepancy_loss(params, *batch, tau1, tau2,
                                    config.kernel_spec());
          }
          NetworkParams ce_grads = zeros_like(params);
          loss.ce = source_ce_grads(
              params, source, config.batch_size,
              derive_seed(epoch_seed, 2 * static_cast<std::uint64_t>(s) + 1),
              &ce_grads);
          loss.total += loss.ce;
          accumulate(loss.grads, ce_grads);
          sgd_step(params, loss.grads, main_opt);
          sum_total += loss.total;
          sum_ce += loss.ce;
          sum_c2c += loss.c2c;
          sum_p2p += loss.p2p;
          ++taken;
        }
        if (metrics == nullptr) continue;
        if (taken == 0) {
          metrics->write({{"stage", "align"},
                          {"iteration", it},
                          {"epoch", e},
                          {"skipped", true}});
          continue;
        }
        const double inv = 1.0 / static_cast<double>(taken);
        metrics->write({{"stage", "align"},
                        {"iteration", it},
                        {"epoch", e},
                        {"t", main_opt.t},
                        {"steps", taken},
                        {"total", num_or_null(sum_total * inv)},
                        {"ce", num_or_null(sum_ce * inv)},
                        {"c2c", num_or_null(sum_c2c * inv)},
                        {"p2p", num_or_null(sum_p2p * inv)}});
      }
    });

    result.final_source_acc =
        evaluate(params, source.features, source.labels, num_classes).accuracy;
    result.final_target_acc =
        scored ? evaluate(params, target.features, target.hidden_labels,
                          num_classes)
                     .accuracy
               : kNaN;
    if (metrics != nullptr)
      metrics->write({{"stage", "evaluate"},
                      {"iteration", it},
                      {"source_acc", num_or_null(result.final_source_acc)},
                      {"target_acc", num_or_null(result.final_target_acc)}});
  }

  if (!out_dir.empty()) {
    save_checkpoint(out_dir + "/checkpoint.bin", params);
    const Evaluation final_eval =
        scored ? evaluate(params, target.features, target.hidden_labels,
                          num_classes)
               : evaluate(params, source.features, source.labels, num_classes);
    write_confusion_csv(out_dir + "/confusion.csv", final_eval.confusion);
    std::ofstream summary(out_dir + "/summary.txt");
    if (!summary) throw DataError("cannot open summary file in " + out_dir);
    summary << summary_text(result);
  }
  return result;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "variant" << std::right << std::setw(12)
      << "src_only" << std::setw(12) << "final" << std::setw(12) << "gain"
      << std::setw(14) << "pseudo_full" << std::setw(14) << "pseudo_filt"
      << std::setw(10) << "kept" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const AblationRow& row : rows) {
    const RunResult& r = row.result;
    out << std::left << std::setw(22) << row.name << std::right
        << std::setw(12) << r.source_only_target_acc << std::setw(12)
        << r.final_target_acc << std::setw(12)
        << r.final_target_acc - r.source_only_target_acc << std::setw(14)
        << r.final_pseudo_acc_full << std::setw(14)
        << r.final_pseudo_acc_filtered << std::setw(10)
        << r.final_filtered_size << '\n';
  }
  return out.str();
}

std::vector<AblationRow> ablate(const RunConfig& base,
                                const std::string& out_dir, bool sweep_tau) {
  validate(base);
  std::vector<AblationRow> rows;
  auto run_variant = [&](const std::string& name, const RunConfig& config) {
    const std::string sub = out_dir.empty() ? "" : out_dir + "/" + name;
    rows.push_back({name, run(config, sub)});
  };

  if (sweep_tau) {
    for (const double tau : {0.05, 0.1, 0.3, 0.6, 1.0}) {
      RunConfig config = base;
      config.tau1 = tau;
      config.tau2 = tau;
      std::ostringstream name;
      name << "tau_" << tau;
      run_variant(name.str(), config);
    }
  } else {
    run_variant("full", base);
    {
      RunConfig config = base;
      config.no_refinement = true;
      run_variant("no_refinement", config);
    }
    {
      RunConfig config = base;
      config.no_confidence_check = true;
      run_variant("no_confidence_check", config);
    }
    {
      RunConfig config = base;
      config.pseudo_source = "net";
      run_variant("pseudo_net", config);
    }
    {
      RunConfig config = base;
      config.loss = "ce_hard";
      run_variant("ce_hard", config);
    }
    {
      RunConfig config = base;
      config.loss = "c2c";
      run_variant("c2c_only", config);
    }
    {
      RunConfig config = base;
      config.loss = "p2p";
      run_variant("p2p_only", config);
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream summary(out_dir + "/summary.txt");
    if (!summary) throw DataError("cannot open summary file in " + out_dir);
    summary << ablation_table(rows);
  }
  return rows;
}

}  // namespace uda
