#pragma once

#include <vector>

#include "dgn/linalg.hpp"
#include "dgn/movmf.hpp"

namespace dgn {

/// n x |C| predicted class probabilities (softmax of head logits).
struct ProbMatrix {
  Matrix values;
};

/// The annotated subset X_l: point indices and their classes.
struct SparseLabels {
  std::vector<int> indices;
  std::vector<int> classes;

  std::size_t size() const noexcept { return indices.size(); }
  /// Throws InvalidArgument for duplicate or out-of-range indices, or
  /// mismatched lengths.
  void validate(Eigen::Index num_points) const;
};

struct LossReport {
  double tce = 0.0;
  double vmf = 0.0;
  double dis = 0.0;
  double con = 0.0;
  double total = 0.0;
};

struct LossToggles {
  bool tce = true;
  bool vmf = true;
  bool dis = true;
  bool con = true;

  bool operator==(const LossToggles&) const = default;
};

/// A scalar loss and its gradient with respect to one input matrix.
struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Partial cross-entropy over labelled points; gradient wrt P.
LossValue pce_loss(const ProbMatrix& p, const SparseLabels& labels);

/// Truncated cross-entropy -(1/m) sum min(log p_i^{y_i}, log beta). Points
/// whose target probability exceeds beta contribute -log beta and exactly
/// zero gradient. beta = 1 reproduces pce_loss bit for bit.
LossValue tce_loss(const ProbMatrix& p, const SparseLabels& labels, double beta);

/// Per-labelled-point tCE contributions (before the 1/m average).
std::vector<double> tce_point_terms(const ProbMatrix& p, const SparseLabels& labels, double beta);

/// -sum_i sum_c q_ic [log alpha_c + kappa u_c . v_i] with v = norm(f).
/// Q and theta are constants; the gradient is wrt the raw features f.
LossValue vmf_loss(const Matrix& features, const Posterior& q, const MoVMFParams& theta);

/// Mean inner product over ordered pairs of distinct mean directions;
/// gradient wrt the means.
LossValue dis_loss(const MoVMFParams& theta);

/// dis_loss evaluated on means rebuilt inside the graph as
/// u_c = norm(sum_i q_ic norm(f_i)), so the gradient reaches the raw
/// features while Q stays constant. A cluster with vanishing weighted sum
/// contributes a zero direction.
LossValue dis_loss_through_means(const Matrix& features, const Posterior& q);

/// Cross-entropy of P against the posterior target Q, averaged over all n
/// points. The gradient is wrt the head logits: (P - Q) / n.
LossValue con_loss(const ProbMatrix& p, const Posterior& q);

/// Back-propagates dL/dP through a row-wise softmax to dL/dlogits.
Matrix softmax_backward(const ProbMatrix& p, const Matrix& grad_p);

/// Unit-weight sum of the enabled terms; disabled terms are reported as 0.
LossReport total_loss(const LossReport& parts, const LossToggles& toggles = {});

}  // namespace dgn
