#pragma once

#include "uda/types.hpp"

#include <string>
#include <vector>

namespace uda {

struct DenseLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
};

/// A feature extractor (tanh after every layer) followed by a linear softmax
/// classifier. The same struct doubles as a container for gradients and
/// momentum buffers since those share the parameter shapes.
struct NetworkParams {
  std::vector<DenseLayer> extractor;
  DenseLayer classifier;

  int input_dim() const;
  int feature_dim() const;
  int num_classes() const;
};

// Glorot-uniform weights, zero biases, deterministic under the seed.
NetworkParams init_network(int input_dim, const std::vector<int>& hidden_sizes,
                           int num_classes, std::uint64_t seed);

NetworkParams zeros_like(const NetworkParams& params);
void accumulate(NetworkParams& into, const NetworkParams& grads,
                double scale = 1.0);

// Throws if layer shapes do not chain from input_dim to num_classes or any
// entry is non-finite.
void check_network(const NetworkParams& params);

/// Cached activations for one batch. Rows are samples throughout.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> activations;  // post-tanh output of each extractor layer
  Matrix logits;
  Matrix probs;  // stable softmax of logits; rows sum to 1

  const Matrix& features() const {
    return activations.empty() ? input : activations.back();
  }
};

ForwardTrace forward(const NetworkParams& params, const Matrix& batch);

// Mean negative log-likelihood of the labels, computed from logits via
// log-sum-exp.
double cross_entropy(const ForwardTrace& trace, const IntVector& labels);

// d(cross_entropy)/d(logits) = (probs - onehot) / batch_size.
Matrix cross_entropy_dlogits(const ForwardTrace& trace,
                             const IntVector& labels);

// Per-sample negative log-likelihood of (batch row i, labels[i]).
Vector per_sample_nll(const NetworkParams& params, const Matrix& batch,
                      const IntVector& labels);

// Pull a gradient on softmax outputs back to a gradient on logits.
Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs);

/// Reverse-mode gradients of a scalar loss w.r.t. every parameter, given the
/// loss gradient at the logits and (optionally, pass an empty matrix) an
/// extra gradient injected at the feature embedding.
NetworkParams backward(const NetworkParams& params, const ForwardTrace& trace,
                       const Matrix& dlogits, const Matrix& dfeatures);

/// SGD with momentum, weight decay, and the annealed learning rate
/// eta(t) = eta0 / (1 + alpha t)^beta with t in [0,1]. eta0 differs between
/// the extractor and classifier parameter groups.
struct OptimizerState {
  NetworkParams velocity;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double eta0_extractor = 0.001;
  double eta0_classifier = 0.01;
  double alpha_sched = 10.0;
  double beta_sched = 0.75;
  double t = 0.0;
};

OptimizerState make_optimizer(const NetworkParams& params);

double scheduled_lr(double eta0, const OptimizerState& state);

// velocity <- momentum * velocity + grad + weight_decay * param
// param    <- param - eta(t) * velocity
void sgd_step(NetworkParams& params, const NetworkParams& grads,
              OptimizerState& state);

// Flat binary checkpoint: magic, layer count, per-layer shape header,
// row-major float64 payload.
void save_checkpoint(const std::string& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace uda
