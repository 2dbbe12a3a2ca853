#include "dgn/losses.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "dgn/error.hpp"

namespace dgn {
namespace {

void check_labels(const ProbMatrix& p, const SparseLabels& labels) {
  if (labels.size() == 0) throw Error(ErrorKind::EmptyLabelSet, "no labelled points");
  labels.validate(p.values.rows());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels.classes[j] < 0 || labels.classes[j] >= p.values.cols()) {
      throw Error(ErrorKind::InvalidArgument, "label class outside probability columns",
                  static_cast<std::int64_t>(j));
    }
  }
}

double labelled_prob(const ProbMatrix& p, const SparseLabels& labels, std::size_t j) {
  return p.values(labels.indices[j], labels.classes[j]);
}

/// -log max(prob, floor) and its derivative; the floor's flat region has zero slope.
std::pair<double, double> neg_log_term(double prob) {
  const double floored = std::max(prob, kLogFloor);
  return {-std::log(floored), prob > kLogFloor ? -1.0 / prob : 0.0};
}

/// d/df of a loss given d/dv, where v = f / ||f||.
Matrix grad_through_normalization(const Matrix& features, const Matrix& unit,
                                  const Matrix& grad_unit) {
  Matrix grad(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    const double radial = unit.row(i).dot(grad_unit.row(i));
    grad.row(i) = (grad_unit.row(i) - radial * unit.row(i)) / norm;
  }
  return grad;
}

double pairwise_mean_dot(const Matrix& means) {
  const Eigen::Index k = means.rows();
  double total = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      if (a != b) total += means.row(a).dot(means.row(b));
    }
  }
  return total / static_cast<double>(k * (k - 1));
}

Matrix pairwise_mean_dot_grad(const Matrix& means) {
  const Eigen::Index k = means.rows();
  const RowVector sum = means.colwise().sum();
  const double scale = 2.0 / static_cast<double>(k * (k - 1));
  Matrix grad(k, means.cols());
  for (Eigen::Index c = 0; c < k; ++c) grad.row(c) = scale * (sum - means.row(c));
  return grad;
}

}  // namespace

void SparseLabels::validate(Eigen::Index num_points) const {
  if (indices.size() != classes.size()) {
    throw Error(ErrorKind::InvalidArgument, "sparse label indices and classes differ in length");
  }
  if (static_cast<Eigen::Index>(indices.size()) > num_points) {
    throw Error(ErrorKind::InvalidArgument, "more labels than points");
  }
  std::unordered_set<int> seen;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 0 || indices[j] >= num_points) {
      throw Error(ErrorKind::InvalidArgument, "label index out of range", static_cast<std::int64_t>(j));
    }
    if (!seen.insert(indices[j]).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate label index", static_cast<std::int64_t>(j));
    }
  }
}

LossValue pce_loss(const ProbMatrix& p, const SparseLabels& labels) {
  check_labels(p, labels);
  const double m = static_cast<double>(labels.size());
  LossValue out{0.0, Matrix::Zero(p.values.rows(), p.values.cols())};
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto [term, slope] = neg_log_term(labelled_prob(p, labels, j));
    total += term;
    out.grad(labels.indices[j], labels.classes[j]) = slope / m;
  }
  out.value = total / m;
  return out;
}

std::vector<double> tce_point_terms(const ProbMatrix& p, const SparseLabels& labels, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::InvalidBeta, "beta must lie in (0, 1]");
  check_labels(p, labels);
  std::vector<double> terms(labels.size());
  const double cap = -std::log(beta);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double prob = labelled_prob(p, labels, j);
    terms[j] = prob > beta ? cap : neg_log_term(prob).first;
  }
  return terms;
}

LossValue tce_loss(const ProbMatrix& p, const SparseLabels& labels, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::InvalidBeta, "beta must lie in (0, 1]");
  check_labels(p, labels);
  const double m = static_cast<double>(labels.size());
  const double cap = -std::log(beta);
  LossValue out{0.0, Matrix::Zero(p.values.rows(), p.values.cols())};
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double prob = labelled_prob(p, labels, j);
    if (prob > beta) {
      total += cap;
      continue;
    }
    const auto [term, slope] = neg_log_term(prob);
    total += term;
    out.grad(labels.indices[j], labels.classes[j]) = slope / m;
  }
  out.value = total / m;
  return out;
}

LossValue vmf_loss(const Matrix& features, const Posterior& q, const MoVMFParams& theta) {
  const EmbeddingMatrix unit = normalize_rows(features);
  LossValue out;
  out.value = -movmf_objective(unit, q, theta);
  // dL/dv_i = -kappa sum_c q_ic u_c
  const Matrix grad_unit = -theta.kappa * (q.values * theta.means);
  out.grad = grad_through_normalization(features, unit.values(), grad_unit);
  return out;
}

LossValue dis_loss(const MoVMFParams& theta) {
  if (theta.num_clusters() < 2) throw Error(ErrorKind::SingleCluster, "dis_loss needs |C| >= 2");
  return {pairwise_mean_dot(theta.means), pairwise_mean_dot_grad(theta.means)};
}

LossValue dis_loss_through_means(const Matrix& features, const Posterior& q) {
  const Eigen::Index k = q.values.cols();
  if (k < 2) throw Error(ErrorKind::SingleCluster, "dis_loss needs |C| >= 2");
  if (q.values.rows() != features.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "posterior rows differ from feature rows");
  }
  const EmbeddingMatrix unit = normalize_rows(features);
  const Matrix sums = q.values.transpose() * unit.values();
  Matrix means = Matrix::Zero(k, features.cols());
  Vector norms(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    norms[c] = sums.row(c).norm();
    if (norms[c] > kZeroNorm) means.row(c) = sums.row(c) / norms[c];
  }

  LossValue out;
  out.value = pairwise_mean_dot(means);
  const Matrix grad_means = pairwise_mean_dot_grad(means);
  Matrix grad_sums = Matrix::Zero(k, features.cols());
  for (Eigen::Index c = 0; c < k; ++c) {
    if (norms[c] <= kZeroNorm) continue;
    const double radial = means.row(c).dot(grad_means.row(c));
    grad_sums.row(c) = (grad_means.row(c) - radial * means.row(c)) / norms[c];
  }
  const Matrix grad_unit = q.values * grad_sums;
  out.grad = grad_through_normalization(features, unit.values(), grad_unit);
  return out;
}

LossValue con_loss(const ProbMatrix& p, const Posterior& q) {
  if (p.values.rows() != q.values.rows() || p.values.cols() != q.values.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "probabilities and posterior differ in shape");
  }
  const Eigen::Index n = p.values.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < p.values.cols(); ++c) {
      const double target = q.values(i, c);
      if (target == 0.0) continue;
      row += target * std::log(std::max(p.values(i, c), kLogFloor));
    }
    total -= row;
  }
  return {total / static_cast<double>(n), (p.values - q.values) / static_cast<double>(n)};
}

Matrix softmax_backward(const ProbMatrix& p, const Matrix& grad_p) {
  if (p.values.rows() != grad_p.rows() || p.values.cols() != grad_p.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient shape differs from probabilities");
  }
  Matrix grad(p.values.rows(), p.values.cols());
  for (Eigen::Index i = 0; i < p.values.rows(); ++i) {
    const double inner = p.values.row(i).dot(grad_p.row(i));
    grad.row(i) = p.values.row(i).cwiseProduct(grad_p.row(i).array().matrix() -
                                               RowVector::Constant(p.values.cols(), inner));
  }
  return grad;
}

LossReport total_loss(const LossReport& parts, const LossToggles& toggles) {
  LossReport out;
  out.tce = toggles.tce ? parts.tce : 0.0;
  out.vmf = toggles.vmf ? parts.vmf : 0.0;
  out.dis = toggles.dis ? parts.dis : 0.0;
  out.con = toggles.con ? parts.con : 0.0;
  out.total = out.tce + out.vmf + out.dis + out.con;
  return out;
}

}  // namespace dgn
