#include "dgn/network.hpp"

#include <cmath>
#include <string>

#include "dgn/error.hpp"
#include "dgn/rng.hpp"

namespace dgn {
namespace {

void fill_uniform(Rng& rng, double bound, double* data, Eigen::Index size) {
  for (Eigen::Index j = 0; j < size; ++j) data[j] = rng.uniform(-bound, bound);
}

void stale(const std::string& what) { throw Error(ErrorKind::StaleCache, what); }

}  // namespace

void ModelParams::validate() const {
  if (layer_weights.empty() || layer_weights.size() != layer_biases.size()) {
    throw Error(ErrorKind::ShapeMismatch, "model needs >= 1 layer with one bias per layer");
  }
  for (std::size_t l = 0; l < layer_weights.size(); ++l) {
    if (layer_biases[l].size() != layer_weights[l].rows()) {
      throw Error(ErrorKind::ShapeMismatch, "bias size differs from layer width",
                  static_cast<std::int64_t>(l));
    }
    if (l > 0 && layer_weights[l].cols() != layer_weights[l - 1].rows()) {
      throw Error(ErrorKind::ShapeMismatch, "layer input differs from previous output",
                  static_cast<std::int64_t>(l));
    }
  }
  if (head_weights.cols() != feature_dim() || head_weights.rows() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "head input differs from feature dimension");
  }
}

bool ModelParams::same_shape(const ModelParams& other) const {
  if (layer_weights.size() != other.layer_weights.size() ||
      layer_biases.size() != other.layer_biases.size()) {
    return false;
  }
  for (std::size_t l = 0; l < layer_weights.size(); ++l) {
    if (layer_weights[l].rows() != other.layer_weights[l].rows() ||
        layer_weights[l].cols() != other.layer_weights[l].cols() ||
        layer_biases[l].size() != other.layer_biases[l].size()) {
      return false;
    }
  }
  return head_weights.rows() == other.head_weights.rows() &&
         head_weights.cols() == other.head_weights.cols();
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& w : layer_weights) out.layer_weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : layer_biases) out.layer_biases.push_back(Vector::Zero(b.size()));
  out.head_weights = Matrix::Zero(head_weights.rows(), head_weights.cols());
  return out;
}

ModelParams init_params(int input_dim, const std::vector<int>& hidden, int feature_dim,
                        int num_classes, std::uint64_t seed) {
  if (input_dim < 1 || feature_dim < 2 || num_classes < 1) {
    throw Error(ErrorKind::InvalidArgument, "invalid model dimensions");
  }
  Rng rng(seed);
  ModelParams params;
  int fan_in = input_dim;
  std::vector<int> widths = hidden;
  widths.push_back(feature_dim);
  for (const int width : widths) {
    if (width < 1) throw Error(ErrorKind::InvalidArgument, "layer width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(width, fan_in);
    Vector b(width);
    fill_uniform(rng, bound, w.data(), w.size());
    fill_uniform(rng, bound, b.data(), b.size());
    params.layer_weights.push_back(std::move(w));
    params.layer_biases.push_back(std::move(b));
    fan_in = width;
  }
  params.head_weights.resize(num_classes, feature_dim);
  fill_uniform(rng, 1.0 / std::sqrt(static_cast<double>(feature_dim)), params.head_weights.data(),
               params.head_weights.size());
  return params;
}

ProbMatrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(i, c) = std::exp(logits(i, c) - top);
      total += p(i, c);
    }
    p.row(i) /= total;
  }
  return ProbMatrix{std::move(p)};
}

ForwardCache forward(const ModelParams& params, const Matrix& points) {
  params.validate();
  if (points.cols() != params.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "point dimension differs from model input");
  }
  ForwardCache cache;
  Matrix h = points;
  const std::size_t layers = params.layer_weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    cache.layer_inputs.push_back(h);
    Matrix z = h * params.layer_weights[l].transpose();
    z.rowwise() += params.layer_biases[l].transpose();
    if (l + 1 < layers) {
      h = z.cwiseMax(0.0);
      cache.pre_activations.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  cache.features = std::move(h);
  cache.logits = cache.features * params.head_weights.transpose();
  cache.probs = softmax(cache.logits);
  return cache;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     const Matrix& grad_features, const Matrix& grad_logits) {
  const std::size_t layers = params.layer_weights.size();
  const Eigen::Index n = cache.features.rows();
  if (cache.layer_inputs.size() != layers || cache.pre_activations.size() + 1 != layers) {
    stale("cache depth differs from model depth");
  }
  if (cache.features.cols() != params.feature_dim() || cache.logits.cols() != params.num_classes()) {
    stale("cache widths differ from model widths");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (cache.layer_inputs[l].cols() != params.layer_weights[l].cols() ||
        cache.layer_inputs[l].rows() != n) {
      stale("cached layer input differs from model layer");
    }
  }
  const bool has_feat = grad_features.size() > 0;
  const bool has_logit = grad_logits.size() > 0;
  if (has_feat && (grad_features.rows() != n || grad_features.cols() != cache.features.cols())) {
    stale("feature gradient shape differs from cached features");
  }
  if (has_logit && (grad_logits.rows() != n || grad_logits.cols() != cache.logits.cols())) {
    stale("logit gradient shape differs from cached logits");
  }

  ModelParams grads = params.zeros_like();
  Matrix delta = has_feat ? grad_features : Matrix::Zero(n, cache.features.cols());
  if (has_logit) {
    grads.head_weights = grad_logits.transpose() * cache.features;
    delta += grad_logits * params.head_weights;
  }
  for (std::size_t l = layers; l-- > 0;) {
    grads.layer_weights[l] = delta.transpose() * cache.layer_inputs[l];
    grads.layer_biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * params.layer_weights[l];
    const Matrix& z = cache.pre_activations[l - 1];
    delta = (z.array() > 0.0).select(upstream, 0.0);
  }
  return grads;
}

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr) {
  if (!(lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (!params.same_shape(grads)) throw Error(ErrorKind::ShapeMismatch, "gradient shape differs from parameters");
  ModelParams out = params;
  for (std::size_t l = 0; l < out.layer_weights.size(); ++l) {
    out.layer_weights[l] -= lr * grads.layer_weights[l];
    out.layer_biases[l] -= lr * grads.layer_biases[l];
  }
  out.head_weights -= lr * grads.head_weights;
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t count = static_cast<std::size_t>(params.head_weights.size());
  for (std::size_t l = 0; l < params.layer_weights.size(); ++l) {
    count += static_cast<std::size_t>(params.layer_weights[l].size() + params.layer_biases[l].size());
  }
  return count;
}

double& parameter_at(ModelParams& params, std::size_t flat_index) {
  auto idx = static_cast<Eigen::Index>(flat_index);
  for (std::size_t l = 0; l < params.layer_weights.size(); ++l) {
    if (idx < params.layer_weights[l].size()) return params.layer_weights[l].data()[idx];
    idx -= params.layer_weights[l].size();
    if (idx < params.layer_biases[l].size()) return params.layer_biases[l].data()[idx];
    idx -= params.layer_biases[l].size();
  }
  if (idx < params.head_weights.size()) return params.head_weights.data()[idx];
  throw Error(ErrorKind::InvalidArgument, "flat parameter index out of range",
              static_cast<std::int64_t>(flat_index));
}

double parameter_at(const ModelParams& params, std::size_t flat_index) {
  return parameter_at(const_cast<ModelParams&>(params), flat_index);
}

}  // namespace dgn
