#pragma once

#include <cstdint>
#include <vector>

#include "dgn/linalg.hpp"
#include "dgn/losses.hpp"

namespace dgn {

/// Per-point MLP plus a bias-free linear segment head. Hidden layers use
/// ReLU; the last layer emits the embedding f with no activation.
/// The same layout doubles as the gradient container.
struct ModelParams {
  std::vector<Matrix> layer_weights;  // out x in
  std::vector<Vector> layer_biases;
  Matrix head_weights;                // |C| x d_feat

  Eigen::Index input_dim() const { return layer_weights.front().cols(); }
  Eigen::Index feature_dim() const { return layer_weights.back().rows(); }
  Eigen::Index num_classes() const { return head_weights.rows(); }

  /// Throws ShapeMismatch when layer dimensions do not chain.
  void validate() const;
  bool same_shape(const ModelParams& other) const;
  ModelParams zeros_like() const;
};

/// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ModelParams init_params(int input_dim, const std::vector<int>& hidden, int feature_dim,
                        int num_classes, std::uint64_t seed);

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;   // input of each layer (first is the points)
  std::vector<Matrix> pre_activations;
  Matrix features;
  Matrix logits;
  ProbMatrix probs;
};

/// Numerically stable row-wise softmax.
ProbMatrix softmax(const Matrix& logits);

ForwardCache forward(const ModelParams& params, const Matrix& points);

/// Reverse-mode gradients given dL/df and dL/dlogits. Either upstream
/// gradient may be an empty matrix, meaning zero.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& grad_features, const Matrix& grad_logits);

/// params - lr * grads. Throws ShapeMismatch or InvalidArgument (lr <= 0).
ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr);

/// Flattened view helpers, used by gradient checks and checkpoints.
std::size_t parameter_count(const ModelParams& params);
double& parameter_at(ModelParams& params, std::size_t flat_index);
double parameter_at(const ModelParams& params, std::size_t flat_index);

}  // namespace dgn
