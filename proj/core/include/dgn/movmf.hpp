#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dgn/linalg.hpp"

namespace dgn {

/// n x d matrix whose rows are unit directions on the hypersphere.
/// Construction validates the invariant; the only ways in are
/// normalize_rows() and from_unit_rows().
class EmbeddingMatrix {
 public:
  /// Wraps rows that are already unit norm (within 1e-9). Throws
  /// NonUnitInput or DimensionMismatch otherwise.
  static EmbeddingMatrix from_unit_rows(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index dim() const noexcept { return values_.cols(); }

 private:
  explicit EmbeddingMatrix(Matrix values) : values_(std::move(values)) {}
  friend EmbeddingMatrix normalize_rows(const Matrix& features);

  Matrix values_;
};

/// Mixture of vMF components sharing one concentration.
struct MoVMFParams {
  Vector alphas;
  double kappa = 0.0;
  Matrix means;
  std::optional<double> log_norm_const;

  Eigen::Index num_clusters() const noexcept { return means.rows(); }
  Eigen::Index dim() const noexcept { return means.cols(); }

  /// Throws InvalidParams when weights, means or kappa break their invariants.
  void validate() const;
};

/// Row-stochastic n x |C| soft assignment.
struct Posterior {
  Matrix values;
};

struct Assignment {
  std::vector<int> labels;
};

struct EMConfig {
  int max_iters = 10;
  /// Stop once max_c (1 - u_c_new . u_c_old) < tol.
  double tol = 1e-6;
  double kappa = 10.0;
  /// E-step worker threads. Rows are independent, so the result does not
  /// depend on this value.
  int threads = 1;
  /// Record per-iteration objective values in EMResult::trace.
  bool record_trace = false;
};

struct EMIterationStats {
  /// Expected complete-data log-likelihood with the fresh posterior and the
  /// parameters that produced it.
  double objective_before_m = 0.0;
  /// Same posterior, parameters after the M step.
  double objective_after_m = 0.0;
  /// Observed-data log-likelihood (without n log C_d) after the M step.
  double log_likelihood = 0.0;
  double mean_shift = 0.0;
};

struct EMResult {
  Posterior posterior;
  Assignment assignment;
  MoVMFParams params;
  int iterations = 0;
  bool converged = false;
  /// Clusters whose weighted direction sum vanished in some iteration; their
  /// previous mean was kept.
  std::vector<int> degenerate_clusters;
  std::vector<EMIterationStats> trace;
};

/// Divides each row by its Euclidean norm. Throws ZeroVectorRow(index) for a
/// row with norm <= 1e-12.
EmbeddingMatrix normalize_rows(const Matrix& features);

/// kappa u.v, plus log C_d(kappa) when include_const is set.
double vmf_log_density(const Vector& v, const Vector& u, double kappa, bool include_const);

/// Row-wise softmax of arbitrary log-scores, with per-row max subtraction.
/// Throws DegenerateRow when a row has no finite score.
Posterior posterior_from_log_scores(const Matrix& scores, int threads = 1);

/// log alpha_c + kappa u_c . v_i for every point and cluster.
Matrix log_scores(const EmbeddingMatrix& embeddings, const MoVMFParams& theta);

/// P(c | v_i, Theta) computed in log-space; C_d(kappa) cancels.
Posterior posterior(const EmbeddingMatrix& embeddings, const MoVMFParams& theta,
                    int threads = 1);

/// sum_i sum_c q_ic [log alpha_c + kappa u_c . v_i], with alpha floored at
/// 1e-12 inside the log. Omits the constant n log C_d(kappa).
double movmf_objective(const EmbeddingMatrix& embeddings, const Posterior& q,
                       const MoVMFParams& theta);

/// sum_i [log alpha_{z_i} + kappa u_{z_i} . v_i], same floor as above.
double hard_objective(const EmbeddingMatrix& embeddings, const Assignment& z,
                      const MoVMFParams& theta);

/// sum_i log sum_c alpha_c exp(kappa u_c . v_i), plus n log C_d(kappa) when
/// include_const is set. This is the quantity EM increases monotonically.
double movmf_log_likelihood(const EmbeddingMatrix& embeddings, const MoVMFParams& theta,
                            bool include_const = false);

/// Row-wise argmax; ties go to the lowest column index.
Assignment argmax_rows(const Matrix& values);

Matrix one_hot(const Assignment& z, Eigen::Index num_clusters);

EMResult soft_movmf_em(const EmbeddingMatrix& embeddings, const Matrix& init_means,
                       const EMConfig& cfg);

/// As soft_movmf_em, but each E step replaces posterior rows by one-hot
/// vectors at their argmax. Clusters that receive no points keep their mean
/// and get alpha_c = 0.
EMResult hard_movmf_em(const EmbeddingMatrix& embeddings, const Matrix& init_means,
                       const EMConfig& cfg);

/// n i.i.d. draws from vMF(u, kappa) using Wood's rejection sampler.
EmbeddingMatrix sample_vmf(const Vector& mean, double kappa, int n, std::uint64_t seed);

/// Number of EM runs (soft or hard) started in this process. Exposed so
/// tests can assert that inference paths never cluster.
std::uint64_t em_invocation_count() noexcept;

}  // namespace dgn
