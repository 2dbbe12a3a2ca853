#include "dgn/movmf.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "dgn/error.hpp"
#include "dgn/rng.hpp"
#include "dgn/special.hpp"
#include "parallel.hpp"

namespace dgn {
namespace {

constexpr double kUnitTol = 1e-9;
constexpr double kInputUnitTol = 1e-6;

std::atomic<std::uint64_t> g_em_invocations{0};

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

double floored_log(double x) { return std::log(std::max(x, kLogFloor)); }

/// log alpha_c + kappa u_c . v_i, shared by both objectives so that they agree
/// bit for bit on one-hot posteriors.
double complete_term(const EmbeddingMatrix& embeddings, const MoVMFParams& theta,
                     Eigen::Index i, Eigen::Index c) {
  return floored_log(theta.alphas[c]) +
         theta.kappa * theta.means.row(c).dot(embeddings.values().row(i));
}

Matrix checked_init_means(const EmbeddingMatrix& embeddings, const Matrix& init_means) {
  if (init_means.rows() < 1) {
    throw Error(ErrorKind::DimensionMismatch, "EM needs at least one initial mean");
  }
  require_same_dim(init_means.cols(), embeddings.dim(), "initial mean dimension");
  for (Eigen::Index c = 0; c < init_means.rows(); ++c) {
    if (std::abs(init_means.row(c).norm() - 1.0) > kInputUnitTol) {
      throw Error(ErrorKind::NonUnitInput, "initial mean is not unit norm", c);
    }
  }
  return init_means;
}

EMResult run_em(const EmbeddingMatrix& embeddings, const Matrix& init_means,
                const EMConfig& cfg, bool hard) {
  if (cfg.max_iters < 0 || !(cfg.tol >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "EM needs max_iters >= 0 and tol >= 0");
  }
  if (!(cfg.kappa >= 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be >= 0");
  g_em_invocations.fetch_add(1, std::memory_order_relaxed);

  const Eigen::Index n = embeddings.rows();
  const Eigen::Index k = init_means.rows();

  EMResult result;
  MoVMFParams& theta = result.params;
  theta.means = checked_init_means(embeddings, init_means);
  theta.alphas = Vector::Constant(k, 1.0 / static_cast<double>(k));
  theta.kappa = cfg.kappa;

  std::vector<bool> degenerate(static_cast<std::size_t>(k), false);

  auto e_step = [&](const MoVMFParams& params) {
    if (!hard) return posterior(embeddings, params, cfg.threads).values;
    return one_hot(argmax_rows(log_scores(embeddings, params)), k);
  };

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Posterior q{e_step(theta)};

    EMIterationStats stats;
    if (cfg.record_trace) stats.objective_before_m = movmf_objective(embeddings, q, theta);

    const Vector mass = q.values.colwise().sum().transpose();
    const Matrix sums = q.values.transpose() * embeddings.values();
    theta.alphas = mass / static_cast<double>(n);

    double shift = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm <= kZeroNorm) {
        degenerate[static_cast<std::size_t>(c)] = true;
        continue;
      }
      const RowVector updated = sums.row(c) / norm;
      shift = std::max(shift, 1.0 - updated.dot(theta.means.row(c)));
      theta.means.row(c) = updated;
    }
    ++result.iterations;

    if (cfg.record_trace) {
      stats.objective_after_m = movmf_objective(embeddings, q, theta);
      stats.log_likelihood = movmf_log_likelihood(embeddings, theta);
      stats.mean_shift = shift;
      result.trace.push_back(stats);
    }
    if (shift < cfg.tol) {
      result.converged = true;
      break;
    }
  }

  result.posterior.values = e_step(theta);
  result.assignment = argmax_rows(result.posterior.values);
  for (Eigen::Index c = 0; c < k; ++c) {
    if (degenerate[static_cast<std::size_t>(c)]) result.degenerate_clusters.push_back(static_cast<int>(c));
  }
  return result;
}

}  // namespace

EmbeddingMatrix EmbeddingMatrix::from_unit_rows(Matrix values) {
  if (values.rows() < 1 || values.cols() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "embeddings need n >= 1 rows and d >= 2 columns");
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (std::abs(values.row(i).norm() - 1.0) > kUnitTol) {
      throw Error(ErrorKind::NonUnitInput, "embedding row is not unit norm", i);
    }
  }
  return EmbeddingMatrix(std::move(values));
}

void MoVMFParams::validate() const {
  if (means.rows() < 1 || alphas.size() != means.rows()) {
    throw Error(ErrorKind::InvalidParams, "alphas and means disagree on the number of clusters");
  }
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw Error(ErrorKind::InvalidParams, "kappa must be finite and >= 0");
  }
  for (Eigen::Index c = 0; c < alphas.size(); ++c) {
    if (!(alphas[c] >= 0.0)) throw Error(ErrorKind::InvalidParams, "negative mixture weight", c);
  }
  if (std::abs(alphas.sum() - 1.0) > kUnitTol) {
    throw Error(ErrorKind::InvalidParams, "mixture weights do not sum to 1");
  }
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    if (std::abs(means.row(c).norm() - 1.0) > kUnitTol) {
      throw Error(ErrorKind::InvalidParams, "mean direction is not unit norm", c);
    }
  }
}

EmbeddingMatrix normalize_rows(const Matrix& features) {
  if (features.rows() < 1 || features.cols() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "embeddings need n >= 1 rows and d >= 2 columns");
  }
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    if (!(norm > kZeroNorm)) throw Error(ErrorKind::ZeroVectorRow, "row has zero norm", i);
    out.row(i) = features.row(i) / norm;
  }
  return EmbeddingMatrix(std::move(out));
}

double vmf_log_density(const Vector& v, const Vector& u, double kappa, bool include_const) {
  require_same_dim(v.size(), u.size(), "vMF density");
  if (std::abs(v.norm() - 1.0) > kInputUnitTol || std::abs(u.norm() - 1.0) > kInputUnitTol) {
    throw Error(ErrorKind::NonUnitInput, "vMF density arguments must be unit vectors");
  }
  if (!(kappa >= 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be >= 0");
  double value = kappa * u.dot(v);
  if (include_const) value += vmf_log_normalizer(static_cast<int>(v.size()), kappa);
  return value;
}

Posterior posterior_from_log_scores(const Matrix& scores, int threads) {
  Matrix q(scores.rows(), scores.cols());
  std::atomic<std::ptrdiff_t> bad_row{-1};
  detail::parallel_rows(scores.rows(), threads, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (std::ptrdiff_t i = begin; i < end; ++i) {
      const double top = scores.row(i).maxCoeff();
      if (!std::isfinite(top)) {
        bad_row.store(i);  // any offending row will do for the report
        continue;
      }
      double total = 0.0;
      for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        const double e = std::exp(scores(i, c) - top);
        q(i, c) = e;
        total += e;
      }
      q.row(i) /= total;
    }
  });
  if (bad_row.load() >= 0) {
    throw Error(ErrorKind::DegenerateRow, "row has no finite log-score", bad_row.load());
  }
  return Posterior{std::move(q)};
}

Matrix log_scores(const EmbeddingMatrix& embeddings, const MoVMFParams& theta) {
  require_same_dim(theta.dim(), embeddings.dim(), "mean dimension");
  Matrix scores = theta.kappa * (embeddings.values() * theta.means.transpose());
  const RowVector log_alpha = theta.alphas.array().log().matrix().transpose();
  scores.rowwise() += log_alpha;
  return scores;
}

Posterior posterior(const EmbeddingMatrix& embeddings, const MoVMFParams& theta, int threads) {
  theta.validate();
  require_same_dim(theta.dim(), embeddings.dim(), "mean dimension");
  if (theta.kappa == 0.0) {
    // Every component density is the same constant on the sphere.
    Matrix q(embeddings.rows(), theta.num_clusters());
    q.rowwise() = theta.alphas.transpose();
    return Posterior{std::move(q)};
  }
  return posterior_from_log_scores(log_scores(embeddings, theta), threads);
}

double movmf_objective(const EmbeddingMatrix& embeddings, const Posterior& q,
                       const MoVMFParams& theta) {
  require_same_dim(q.values.rows(), embeddings.rows(), "posterior rows");
  require_same_dim(q.values.cols(), theta.num_clusters(), "posterior columns");
  require_same_dim(theta.alphas.size(), theta.num_clusters(), "mixture weights");
  require_same_dim(theta.dim(), embeddings.dim(), "mean dimension");
  double total = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < theta.num_clusters(); ++c) {
      const double weight = q.values(i, c);
      if (weight == 0.0) continue;
      row += weight * complete_term(embeddings, theta, i, c);
    }
    total += row;
  }
  return total;
}

double hard_objective(const EmbeddingMatrix& embeddings, const Assignment& z,
                      const MoVMFParams& theta) {
  require_same_dim(static_cast<Eigen::Index>(z.labels.size()), embeddings.rows(), "assignment length");
  require_same_dim(theta.dim(), embeddings.dim(), "mean dimension");
  double total = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const int c = z.labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= theta.num_clusters()) {
      throw Error(ErrorKind::DimensionMismatch, "assignment outside cluster range", i);
    }
    total += complete_term(embeddings, theta, i, c);
  }
  return total;
}

double movmf_log_likelihood(const EmbeddingMatrix& embeddings, const MoVMFParams& theta,
                            bool include_const) {
  const Matrix scores = log_scores(embeddings, theta);
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    total += top + std::log((scores.row(i).array() - top).exp().sum());
  }
  if (include_const) {
    total += static_cast<double>(embeddings.rows()) *
             vmf_log_normalizer(static_cast<int>(embeddings.dim()), theta.kappa);
  }
  return total;
}

Assignment argmax_rows(const Matrix& values) {
  Assignment z;
  z.labels.resize(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < values.cols(); ++c) {
      if (values(i, c) > values(i, best)) best = c;
    }
    z.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return z;
}

Matrix one_hot(const Assignment& z, Eigen::Index num_clusters) {
  Matrix q = Matrix::Zero(static_cast<Eigen::Index>(z.labels.size()), num_clusters);
  for (std::size_t i = 0; i < z.labels.size(); ++i) {
    q(static_cast<Eigen::Index>(i), z.labels[i]) = 1.0;
  }
  return q;
}

EMResult soft_movmf_em(const EmbeddingMatrix& embeddings, const Matrix& init_means,
                       const EMConfig& cfg) {
  return run_em(embeddings, init_means, cfg, false);
}

EMResult hard_movmf_em(const EmbeddingMatrix& embeddings, const Matrix& init_means,
                       const EMConfig& cfg) {
  return run_em(embeddings, init_means, cfg, true);
}

EmbeddingMatrix sample_vmf(const Vector& mean, double kappa, int n, std::uint64_t seed) {
  const Eigen::Index d = mean.size();
  if (d < 2 || n < 1) throw Error(ErrorKind::InvalidArgument, "sample_vmf needs d >= 2 and n >= 1");
  if (std::abs(mean.norm() - 1.0) > kInputUnitTol) {
    throw Error(ErrorKind::NonUnitInput, "vMF mean must be a unit vector");
  }
  if (!(kappa >= 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be >= 0");

  Rng rng(seed);
  const Vector mu = mean / mean.norm();
  const double dm1 = static_cast<double>(d - 1);
  // Wood (1994); b written to avoid cancellation at large kappa.
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);

  Matrix out(n, d);
  Vector tangent(d);
  for (int s = 0; s < n; ++s) {
    double w = 0.0;
    for (;;) {
      const double z = rng.beta(0.5 * dm1, 0.5 * dm1);
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      const double u = rng.uniform_positive();
      if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
    double tangent_norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < d; ++j) tangent[j] = rng.normal();
      tangent -= tangent.dot(mu) * mu;
      tangent_norm = tangent.norm();
    } while (tangent_norm <= kZeroNorm);
    tangent /= tangent_norm;
    out.row(s) = (w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * tangent).transpose();
  }
  return normalize_rows(out);
}

std::uint64_t em_invocation_count() noexcept {
  return g_em_invocations.load(std::memory_order_relaxed);
}

}  // namespace dgn
