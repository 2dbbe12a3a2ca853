#include "dgn/baselines.hpp"

#include <cmath>
#include <numbers>

#include "dgn/error.hpp"

namespace dgn {
namespace {

void require_cols(const Matrix& features, Eigen::Index cols) {
  if (features.cols() != cols) {
    throw Error(ErrorKind::DimensionMismatch, "feature dimension differs from model dimension");
  }
}

double log_gaussian_normalizer(Eigen::Index dim, double variance) {
  return -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * variance);
}

/// log w_c + log N(f_i | mu_c, var_c I), weights floored inside the log.
double gmm_complete_term(const Matrix& features, const GMMParams& params, Eigen::Index i,
                         Eigen::Index c) {
  const double var = params.variances[c];
  return std::log(std::max(params.weights[c], kLogFloor)) +
         log_gaussian_normalizer(features.cols(), var) -
         (features.row(i) - params.means.row(c)).squaredNorm() / (2.0 * var);
}

}  // namespace

void PrototypeSet::validate() const {
  if (prototypes.rows() < 1) throw Error(ErrorKind::InvalidParams, "no prototypes");
  if (metric == PrototypeMetric::Cosine) {
    for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
      if (std::abs(prototypes.row(c).norm() - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidParams, "cosine prototype is not unit norm", c);
      }
    }
  }
}

void GMMParams::validate() const {
  const Eigen::Index k = means.rows();
  if (k < 1 || weights.size() != k || variances.size() != k) {
    throw Error(ErrorKind::InvalidParams, "GMM parameter sizes disagree");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() < 0.0).any()) {
    throw Error(ErrorKind::InvalidParams, "GMM weights must be nonnegative and sum to 1");
  }
  if (!(variances.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidParams, "GMM variances must be positive");
  }
}

Assignment prototype_assign(const Matrix& features, const PrototypeSet& protos) {
  protos.validate();
  require_cols(features, protos.prototypes.cols());
  const Eigen::Index k = protos.prototypes.rows();
  Matrix scores(features.rows(), k);
  if (protos.metric == PrototypeMetric::Cosine) {
    const EmbeddingMatrix unit = normalize_rows(features);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      for (Eigen::Index c = 0; c < k; ++c) {
        scores(i, c) = unit.values().row(i).dot(protos.prototypes.row(c));
      }
    }
  } else {
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      for (Eigen::Index c = 0; c < k; ++c) {
        scores(i, c) = -(features.row(i) - protos.prototypes.row(c)).squaredNorm();
      }
    }
  }
  return argmax_rows(scores);
}

Matrix gmm_log_scores(const Matrix& features, const GMMParams& params) {
  require_cols(features, params.means.cols());
  const Eigen::Index k = params.num_clusters();
  Matrix scores(features.rows(), k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double var = params.variances[c];
    const double offset = std::log(params.weights[c]) + log_gaussian_normalizer(features.cols(), var);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      scores(i, c) = offset - (features.row(i) - params.means.row(c)).squaredNorm() / (2.0 * var);
    }
  }
  return scores;
}

double gmm_objective(const Matrix& features, const Posterior& q, const GMMParams& params) {
  require_cols(features, params.means.cols());
  if (q.values.rows() != features.rows() || q.values.cols() != params.num_clusters()) {
    throw Error(ErrorKind::DimensionMismatch, "posterior shape differs from data and model");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < params.num_clusters(); ++c) {
      const double weight = q.values(i, c);
      if (weight == 0.0) continue;
      row += weight * gmm_complete_term(features, params, i, c);
    }
    total += row;
  }
  return total;
}

double gmm_log_likelihood(const Matrix& features, const GMMParams& params) {
  const Matrix scores = gmm_log_scores(features, params);
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    total += top + std::log((scores.row(i).array() - top).exp().sum());
  }
  return total;
}

GMMResult gmm_em(const Matrix& features, const Matrix& init_means, const EMConfig& cfg) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k = init_means.rows();
  const Eigen::Index d = features.cols();
  require_cols(features, init_means.cols());
  if (k < 1 || n < k) throw Error(ErrorKind::DimensionMismatch, "gmm_em needs n >= |C| >= 1");
  if (!init_means.allFinite()) throw Error(ErrorKind::InvalidArgument, "initial means must be finite");
  if (cfg.max_iters < 0 || !(cfg.tol >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "EM needs max_iters >= 0 and tol >= 0");
  }

  GMMResult result;
  GMMParams& params = result.params;
  params.means = init_means;
  params.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  const RowVector centroid = features.colwise().mean();
  const double pooled = (features.rowwise() - centroid).squaredNorm() / static_cast<double>(n * d);
  params.variances = Vector::Constant(k, std::max(pooled, kVarianceFloor));

  std::vector<bool> degenerate(static_cast<std::size_t>(k), false);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Posterior q = posterior_from_log_scores(gmm_log_scores(features, params), cfg.threads);
    EMIterationStats stats;
    if (cfg.record_trace) stats.objective_before_m = gmm_objective(features, q, params);

    const Vector mass = q.values.colwise().sum().transpose();
    const Matrix sums = q.values.transpose() * features;
    params.weights = mass / static_cast<double>(n);

    double shift = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (mass[c] <= kZeroNorm) {
        degenerate[static_cast<std::size_t>(c)] = true;
        continue;
      }
      const RowVector mean = sums.row(c) / mass[c];
      double scatter = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        scatter += q.values(i, c) * (features.row(i) - mean).squaredNorm();
      }
      shift = std::max(shift, (mean - params.means.row(c)).norm());
      params.means.row(c) = mean;
      params.variances[c] = std::max(scatter / (static_cast<double>(d) * mass[c]), kVarianceFloor);
    }
    ++result.iterations;

    if (cfg.record_trace) {
      stats.objective_after_m = gmm_objective(features, q, params);
      stats.log_likelihood = gmm_log_likelihood(features, params);
      stats.mean_shift = shift;
      result.trace.push_back(stats);
    }
    if (shift < cfg.tol) {
      result.converged = true;
      break;
    }
  }

  result.posterior = posterior_from_log_scores(gmm_log_scores(features, params), cfg.threads);
  result.assignment = argmax_rows(result.posterior.values);
  for (Eigen::Index c = 0; c < k; ++c) {
    if (degenerate[static_cast<std::size_t>(c)]) result.degenerate_clusters.push_back(static_cast<int>(c));
  }
  return result;
}

LossValue gmm_nll_loss(const Matrix& features, const Posterior& q, const GMMParams& params) {
  LossValue out;
  out.value = -gmm_objective(features, q, params);
  out.grad = Matrix::Zero(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index c = 0; c < params.num_clusters(); ++c) {
      const double weight = q.values(i, c);
      if (weight == 0.0) continue;
      out.grad.row(i) += weight * (features.row(i) - params.means.row(c)) / params.variances[c];
    }
  }
  return out;
}

}  // namespace dgn
