#include "uda/model.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

namespace uda {

namespace {

constexpr char kCheckpointMagic[8] = {'U', 'D', 'A', 'N', 'E', 'T', '0', '1'};

Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  return w;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - m).exp().matrix();
    probs.row(i) /= probs.row(i).sum();
  }
  return probs;
}

// log(sum_j exp(logits(i, j))) per row, shifted by the row max for stability.
Vector row_logsumexp(const Matrix& logits) {
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out(i) = m + std::log((logits.row(i).array() - m).exp().sum());
  }
  return out;
}

void check_layer(const DenseLayer& layer, const char* what) {
  if (layer.weight.cols() != layer.bias.size())
    throw DataError(std::string(what) + ": bias size does not match weight");
  if (!layer.weight.allFinite() || !layer.bias.allFinite())
    throw DataError(std::string(what) + ": non-finite parameter");
}

void write_matrix(std::ostream& out, const Matrix& m) {
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Matrix read_matrix(std::istream& in, const std::string& path) {
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw DataError("truncated checkpoint: " + path);
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  if (!in) throw DataError("truncated checkpoint: " + path);
  return m;
}

}  // namespace

int NetworkParams::input_dim() const {
  return static_cast<int>(extractor.empty() ? classifier.weight.rows()
                                            : extractor.front().weight.rows());
}

int NetworkParams::feature_dim() const {
  return static_cast<int>(classifier.weight.rows());
}

int NetworkParams::num_classes() const {
  return static_cast<int>(classifier.weight.cols());
}

NetworkParams init_network(int input_dim, const std::vector<int>& hidden_sizes,
                           int num_classes, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  for (int h : hidden_sizes)
    if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");

  std::mt19937_64 rng(seed);
  NetworkParams params;
  int in = input_dim;
  for (int h : hidden_sizes) {
    params.extractor.push_back({glorot_uniform(in, h, rng), Vector::Zero(h)});
    in = h;
  }
  params.classifier = {glorot_uniform(in, num_classes, rng),
                       Vector::Zero(num_classes)};
  return params;
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams out;
  out.extractor.reserve(params.extractor.size());
  for (const DenseLayer& layer : params.extractor)
    out.extractor.push_back(
        {Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
         Vector::Zero(layer.bias.size())});
  out.classifier = {Matrix::Zero(params.classifier.weight.rows(),
                                 params.classifier.weight.cols()),
                    Vector::Zero(params.classifier.bias.size())};
  return out;
}

void accumulate(NetworkParams& into, const NetworkParams& grads,
                double scale) {
  for (std::size_t l = 0; l < into.extractor.size(); ++l) {
    into.extractor[l].weight += scale * grads.extractor[l].weight;
    into.extractor[l].bias += scale * grads.extractor[l].bias;
  }
  into.classifier.weight += scale * grads.classifier.weight;
  into.classifier.bias += scale * grads.classifier.bias;
}

void check_network(const NetworkParams& params) {
  Eigen::Index in = params.input_dim();
  for (std::size_t l = 0; l < params.extractor.size(); ++l) {
    const DenseLayer& layer = params.extractor[l];
    check_layer(layer, "extractor layer");
    if (layer.weight.rows() != in)
      throw DataError("extractor layer " + std::to_string(l) +
                      ": input size does not chain from previous layer");
    in = layer.weight.cols();
  }
  check_layer(params.classifier, "classifier");
  if (params.classifier.weight.rows() != in)
    throw DataError("classifier input size does not match feature size");
  if (params.classifier.weight.cols() < 2)
    throw DataError("classifier must output at least 2 classes");
}

ForwardTrace forward(const NetworkParams& params, const Matrix& batch) {
  if (batch.cols() != params.input_dim())
    throw DataError("batch has " + std::to_string(batch.cols()) +
                    " columns, network expects " +
                    std::to_string(params.input_dim()));
  ForwardTrace trace;
  trace.input = batch;
  const Matrix* prev = &trace.input;
  trace.activations.reserve(params.extractor.size());
  for (const DenseLayer& layer : params.extractor) {
    Matrix z = (*prev * layer.weight).rowwise() + layer.bias.transpose();
    trace.activations.push_back(z.array().tanh().matrix());
    prev = &trace.activations.back();
  }
  trace.logits = (*prev * params.classifier.weight).rowwise() +
                 params.classifier.bias.transpose();
  trace.probs = row_softmax(trace.logits);
  return trace;
}

double cross_entropy(const ForwardTrace& trace, const IntVector& labels) {
  if (labels.size() != trace.logits.rows())
    throw DataError("label count does not match batch size");
  const Vector lse = row_logsumexp(trace.logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= trace.logits.cols())
      throw DataError("label out of range at row " + std::to_string(i));
    total += lse(i) - trace.logits(i, labels(i));
  }
  return total / static_cast<double>(labels.size());
}

Matrix cross_entropy_dlogits(const ForwardTrace& trace,
                             const IntVector& labels) {
  Matrix d = trace.probs / static_cast<double>(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    d(i, labels(i)) -= 1.0 / static_cast<double>(labels.size());
  return d;
}

Vector per_sample_nll(const NetworkParams& params, const Matrix& batch,
                      const IntVector& labels) {
  const ForwardTrace trace = forward(params, batch);
  if (labels.size() != trace.logits.rows())
    throw DataError("label count does not match batch size");
  const Vector lse = row_logsumexp(trace.logits);
  Vector nll(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= trace.logits.cols())
      throw DataError("label out of range at row " + std::to_string(i));
    nll(i) = lse(i) - trace.logits(i, labels(i));
  }
  return nll;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
  // dlogits_ij = p_ij * (dp_ij - sum_k dp_ik p_ik)
  const Vector rowdot = (dprobs.array() * probs.array()).rowwise().sum();
  return (probs.array() * (dprobs.colwise() - rowdot).array()).matrix();
}

NetworkParams backward(const NetworkParams& params, const ForwardTrace& trace,
                       const Matrix& dlogits, const Matrix& dfeatures) {
  NetworkParams grads = zeros_like(params);
  const Matrix& feats = trace.features();

  grads.classifier.weight = feats.transpose() * dlogits;
  grads.classifier.bias = dlogits.colwise().sum();
  Matrix dact = dlogits * params.classifier.weight.transpose();
  if (dfeatures.size() > 0) dact += dfeatures;

  for (int l = static_cast<int>(params.extractor.size()) - 1; l >= 0; --l) {
    const Matrix& act = trace.activations[l];
    // tanh'(z) = 1 - tanh(z)^2, and act already holds tanh(z).
    const Matrix dz = (dact.array() * (1.0 - act.array().square())).matrix();
    const Matrix& in = (l == 0) ? trace.input : trace.activations[l - 1];
    grads.extractor[l].weight = in.transpose() * dz;
    grads.extractor[l].bias = dz.colwise().sum();
    if (l > 0) dact = dz * params.extractor[l].weight.transpose();
  }
  return grads;
}

OptimizerState make_optimizer(const NetworkParams& params) {
  OptimizerState state;
  state.velocity = zeros_like(params);
  return state;
}

double scheduled_lr(double eta0, const OptimizerState& state) {
  return eta0 / std::pow(1.0 + state.alpha_sched * state.t, state.beta_sched);
}

void sgd_step(NetworkParams& params, const NetworkParams& grads,
              OptimizerState& state) {
  const double eta_ext = scheduled_lr(state.eta0_extractor, state);
  const double eta_cls = scheduled_lr(state.eta0_classifier, state);
  auto step = [&state](DenseLayer& p, const DenseLayer& g, DenseLayer& v,
                       double eta) {
    v.weight = state.momentum * v.weight + g.weight +
               state.weight_decay * p.weight;
    v.bias = state.momentum * v.bias + g.bias + state.weight_decay * p.bias;
    p.weight -= eta * v.weight;
    p.bias -= eta * v.bias;
  };
  for (std::size_t l = 0; l < params.extractor.size(); ++l)
    step(params.extractor[l], grads.extractor[l], state.velocity.extractor[l],
         eta_ext);
  step(params.classifier, grads.classifier, state.velocity.classifier,
       eta_cls);
}

void save_checkpoint(const std::string& path, const NetworkParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t layers =
      static_cast<std::uint32_t>(params.extractor.size());
  out.write(reinterpret_cast<const char*>(&layers), sizeof(layers));
  for (const DenseLayer& layer : params.extractor) {
    write_matrix(out, layer.weight);
    write_matrix(out, layer.bias);
  }
  write_matrix(out, params.classifier.weight);
  write_matrix(out, params.classifier.bias);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic),
                         std::begin(kCheckpointMagic)))
    throw DataError("not a network checkpoint: " + path);
  std::uint32_t layers = 0;
  in.read(reinterpret_cast<char*>(&layers), sizeof(layers));
  if (!in || layers > 64) throw DataError("corrupt checkpoint: " + path);

  NetworkParams params;
  for (std::uint32_t l = 0; l < layers; ++l) {
    Matrix w = read_matrix(in, path);
    Matrix b = read_matrix(in, path);
    params.extractor.push_back({std::move(w), Vector(b.reshaped())});
  }
  Matrix w = read_matrix(in, path);
  Matrix b = read_matrix(in, path);
  params.classifier = {std::move(w), Vector(b.reshaped())};
  check_network(params);
  return params;
}

}  // namespace uda
