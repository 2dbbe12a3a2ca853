#pragma once

#include <vector>

#include "dgn/linalg.hpp"
#include "dgn/losses.hpp"
#include "dgn/movmf.hpp"

namespace dgn {

enum class PrototypeMetric { Euclidean, Cosine };

/// Fixed category prototypes compared to features by distance or angle.
struct PrototypeSet {
  PrototypeMetric metric = PrototypeMetric::Euclidean;
  Matrix prototypes;

  void validate() const;
};

/// Isotropic Gaussian mixture: one scalar variance per component.
struct GMMParams {
  Vector weights;
  Matrix means;
  Vector variances;

  Eigen::Index num_clusters() const noexcept { return means.rows(); }
  void validate() const;
};

struct GMMResult {
  Posterior posterior;
  Assignment assignment;
  GMMParams params;
  int iterations = 0;
  bool converged = false;
  std::vector<int> degenerate_clusters;
  std::vector<EMIterationStats> trace;
};

inline constexpr double kVarianceFloor = 1e-6;

/// Nearest prototype: smallest Euclidean distance, or largest cosine
/// similarity after row-normalising the features. Ties go to the lowest index.
Assignment prototype_assign(const Matrix& features, const PrototypeSet& protos);

/// log w_c + log N(f_i | mu_c, sigma_c^2 I) for every point and component.
Matrix gmm_log_scores(const Matrix& features, const GMMParams& params);

/// Expected complete-data log-likelihood sum_i sum_c q_ic log(w_c N(f_i)).
double gmm_objective(const Matrix& features, const Posterior& q, const GMMParams& params);

/// Observed-data log-likelihood sum_i log sum_c w_c N(f_i).
double gmm_log_likelihood(const Matrix& features, const GMMParams& params);

/// EM for the isotropic GMM. Weights start uniform and every variance starts
/// at the pooled per-dimension variance of the data. Iteration stops after
/// cfg.max_iters or once the largest Euclidean mean shift drops below cfg.tol.
/// cfg.kappa is ignored.
GMMResult gmm_em(const Matrix& features, const Matrix& init_means, const EMConfig& cfg);

/// Negated gmm_objective, with the gradient wrt the features.
LossValue gmm_nll_loss(const Matrix& features, const Posterior& q, const GMMParams& params);

}  // namespace dgn
