#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dgn/error.hpp"
#include "dgn/movmf.hpp"
#include "dgn/special.hpp"
#include "test_util.hpp"

namespace dgn {
namespace {

using testing::simpson;
using testing::unit_rows;

MoVMFParams uniform_params(const Matrix& means, double kappa) {
  MoVMFParams theta;
  theta.means = means;
  theta.alphas = Vector::Constant(means.rows(), 1.0 / static_cast<double>(means.rows()));
  theta.kappa = kappa;
  return theta;
}

TEST(NormalizeRows, ProducesUnitRows) {
  Matrix f(2, 2);
  f << 3, 4, 0, -2;
  const EmbeddingMatrix v = normalize_rows(f);
  EXPECT_DOUBLE_EQ(v.values()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(v.values()(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(v.values()(1, 1), -1.0);
}

TEST(NormalizeRows, ZeroRowReportsItsIndex) {
  Matrix f(3, 2);
  f << 1, 0, 0, 0, 0, 1;
  try {
    normalize_rows(f);
    FAIL() << "expected ZeroVectorRow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVectorRow);
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(EmbeddingMatrix, RejectsNonUnitRows) {
  Matrix f(1, 2);
  f << 1.0, 1e-3;
  EXPECT_THROW(EmbeddingMatrix::from_unit_rows(f), Error);
  f << 1.0, 0.0;
  EXPECT_NO_THROW(EmbeddingMatrix::from_unit_rows(f));
}

TEST(Posterior, HandComputedTwoClusterValue) {
  Matrix v(1, 2);
  v << 1, 0;
  Matrix u(2, 2);
  u << 1, 0, 0, 1;
  const Posterior q = posterior(EmbeddingMatrix::from_unit_rows(v), uniform_params(u, 1.0));
  // e / (e + 1)
  EXPECT_NEAR(q.values(0, 0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(q.values(0, 1), 1.0 / (std::exp(1.0) + 1.0), 1e-15);
}

TEST(Posterior, ZeroConcentrationReturnsWeightsExactly) {
  Rng rng(4);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(30, 5, rng));
  MoVMFParams theta = uniform_params(unit_rows(3, 5, rng), 0.0);
  theta.alphas << 0.2, 0.3, 0.5;
  const Posterior q = posterior(v, theta);
  for (Eigen::Index i = 0; i < q.values.rows(); ++i) {
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_EQ(q.values(i, c), theta.alphas[c]);
  }
}

TEST(Posterior, StableForHugeConcentration) {
  Rng rng(5);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(20, 4, rng));
  const Posterior q = posterior(v, uniform_params(unit_rows(3, 4, rng), 1e6));
  for (Eigen::Index i = 0; i < q.values.rows(); ++i) {
    EXPECT_TRUE(q.values.row(i).allFinite());
    EXPECT_NEAR(q.values.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(Posterior, RowWithoutFiniteScoreIsDegenerate) {
  Matrix scores(2, 2);
  scores << 0.0, 1.0, -INFINITY, -INFINITY;
  try {
    posterior_from_log_scores(scores);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateRow);
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(Posterior, ThreadCountDoesNotChangeResult) {
  Rng rng(6);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(257, 6, rng));
  const MoVMFParams theta = uniform_params(unit_rows(4, 6, rng), 10.0);
  EXPECT_EQ(posterior(v, theta, 1).values, posterior(v, theta, 4).values);
}

TEST(Objective, OneHotMatchesHardObjectiveBitwise) {
  Rng rng(8);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(40, 3, rng));
  MoVMFParams theta = uniform_params(unit_rows(4, 3, rng), 10.0);
  theta.alphas << 0.1, 0.2, 0.3, 0.4;
  const Assignment z = argmax_rows(log_scores(v, theta));
  EXPECT_EQ(movmf_objective(v, Posterior{one_hot(z, 4)}, theta), hard_objective(v, z, theta));
}

TEST(Objective, HandEvaluatedValue) {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  Matrix u(2, 2);
  u << 1, 0, 0, 1;
  const MoVMFParams theta = uniform_params(u, 2.0);
  Matrix q(2, 2);
  q << 0.75, 0.25, 0.5, 0.5;
  // row 0: 0.75 (log .5 + 2) + 0.25 log .5 ; row 1: 0.5 log .5 + 0.5 (log .5 + 2)
  const double expected = 2.0 * std::log(0.5) + 0.75 * 2.0 + 0.5 * 2.0;
  EXPECT_NEAR(movmf_objective(EmbeddingMatrix::from_unit_rows(v), Posterior{q}, theta), expected, 1e-14);
}

TEST(LogLikelihood, IncludesNormalizerOnRequest) {
  Rng rng(12);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(10, 3, rng));
  const MoVMFParams theta = uniform_params(unit_rows(2, 3, rng), 3.0);
  double manual = 0.0;
  for (Eigen::Index i = 0; i < 10; ++i) {
    double mix = 0.0;
    for (Eigen::Index c = 0; c < 2; ++c) mix += 0.5 * std::exp(3.0 * theta.means.row(c).dot(v.values().row(i)));
    manual += std::log(mix);
  }
  EXPECT_NEAR(movmf_log_likelihood(v, theta), manual, 1e-12);
  EXPECT_NEAR(movmf_log_likelihood(v, theta, true), manual + 10 * vmf_log_normalizer(3, 3.0), 1e-12);
}

TEST(Argmax, TiesGoToLowestIndex) {
  Matrix m(2, 3);
  m << 1, 1, 0, 0, 2, 2;
  const Assignment z = argmax_rows(m);
  EXPECT_EQ(z.labels, (std::vector<int>{0, 1}));
}

struct EmProperty : ::testing::TestWithParam<int> {};

TEST_P(EmProperty, ObservedLikelihoodRisesAndMStepAscends) {
  Rng rng(mix_seed(100, static_cast<std::uint64_t>(GetParam())));
  const int n = 20 + static_cast<int>(rng.index(200));
  const int d = 2 + static_cast<int>(rng.index(10));
  const int k = 1 + static_cast<int>(rng.index(6));
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(n, d, rng));
  EMConfig cfg;
  cfg.kappa = rng.uniform(0.5, 30.0);
  cfg.max_iters = 25;
  cfg.tol = 0.0;
  cfg.record_trace = true;
  const EMResult res = soft_movmf_em(v, unit_rows(k, d, rng), cfg);
  ASSERT_EQ(res.trace.size(), static_cast<std::size_t>(res.iterations));
  for (std::size_t t = 0; t < res.trace.size(); ++t) {
    EXPECT_GE(res.trace[t].objective_after_m, res.trace[t].objective_before_m - 1e-9);
    if (t > 0) EXPECT_GE(res.trace[t].log_likelihood, res.trace[t - 1].log_likelihood - 1e-9);
  }
  for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(res.posterior.values.row(i).sum(), 1.0, 1e-9);
  for (Eigen::Index c = 0; c < k; ++c) EXPECT_NEAR(res.params.means.row(c).norm(), 1.0, 1e-9);
  EXPECT_NEAR(res.params.alphas.sum(), 1.0, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, EmProperty, ::testing::Range(0, 40));

TEST(SoftEm, ZeroIterationsReturnsInitialPosterior) {
  Rng rng(13);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(25, 4, rng));
  const Matrix init = unit_rows(3, 4, rng);
  EMConfig cfg;
  cfg.max_iters = 0;
  const EMResult res = soft_movmf_em(v, init, cfg);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(res.posterior.values, posterior(v, uniform_params(init, cfg.kappa)).values);
}

TEST(SoftEm, ThreadCountDoesNotChangeResult) {
  Rng rng(14);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(300, 5, rng));
  const Matrix init = unit_rows(4, 5, rng);
  EMConfig one;
  EMConfig four;
  four.threads = 4;
  const EMResult a = soft_movmf_em(v, init, one);
  const EMResult b = soft_movmf_em(v, init, four);
  EXPECT_EQ(a.posterior.values, b.posterior.values);
  EXPECT_EQ(a.params.means, b.params.means);
}

TEST(SoftEm, RejectsNonUnitInitialMeans) {
  Rng rng(15);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(10, 3, rng));
  EXPECT_THROW(soft_movmf_em(v, 2.0 * unit_rows(2, 3, rng), EMConfig{}), Error);
  EXPECT_THROW(soft_movmf_em(v, unit_rows(2, 4, rng), EMConfig{}), Error);
}

TEST(SoftEm, CountsInvocations) {
  Rng rng(16);
  const auto v = EmbeddingMatrix::from_unit_rows(unit_rows(10, 3, rng));
  const auto before = em_invocation_count();
  soft_movmf_em(v, unit_rows(2, 3, rng), EMConfig{});
  hard_movmf_em(v, unit_rows(2, 3, rng), EMConfig{});
  EXPECT_EQ(em_invocation_count(), before + 2);
}

TEST(HardEm, PosteriorIsOneHotAndEmptyClusterKeepsItsMean) {
  Matrix v(4, 2);
  v << 1, 0, 0.99, 0.1411, 0, 1, 0.1411, 0.99;
  Matrix init(3, 2);
  init << 1, 0, 0, 1, -1, 0;
  const EMResult res = hard_movmf_em(normalize_rows(v), init, EMConfig{});
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ(res.posterior.values.row(i).sum(), 1.0);
    EXPECT_EQ(res.posterior.values.row(i).maxCoeff(), 1.0);
  }
  EXPECT_EQ(res.params.alphas[2], 0.0);
  EXPECT_EQ(res.params.means.row(2), init.row(2));
  EXPECT_EQ(res.degenerate_clusters, std::vector<int>{2});
  EXPECT_EQ(res.assignment.labels, (std::vector<int>{0, 0, 1, 1}));
}

// Mean resultant length E[u.v] of vMF(u, kappa) on S^{d-1}, by quadrature.
double mean_resultant_length(int d, double kappa) {
  auto weight = [&](double t) { return std::exp(kappa * (std::cos(t) - 1.0)) * std::pow(std::sin(t), d - 2); };
  const double num = simpson([&](double t) { return std::cos(t) * weight(t); }, 0.0, std::numbers::pi);
  const double den = simpson(weight, 0.0, std::numbers::pi);
  return num / den;
}

TEST(SampleVmf, MatchesMeanResultantLength) {
  for (int d : {2, 3, 8}) {
    for (double kappa : {1.0, 10.0, 50.0}) {
      Vector mu = Vector::Zero(d);
      mu[d - 1] = 1.0;
      const int n = 20000;
      const EmbeddingMatrix s = sample_vmf(mu, kappa, n, 77);
      const Vector dots = s.values() * mu;
      const double mean = dots.mean();
      const double sd = std::sqrt((dots.array() - mean).square().sum() / (n - 1));
      EXPECT_NEAR(mean, mean_resultant_length(d, kappa), 5.0 * sd / std::sqrt(n)) << "d=" << d << " k=" << kappa;
      // Orthogonal component should average to zero.
      EXPECT_NEAR(s.values().col(0).mean(), 0.0, 5.0 / std::sqrt(n) + 1e-12) << "d=" << d;
    }
  }
}

TEST(SampleVmf, RecoversMixtureParameters) {
  const int d = 8;
  Matrix means = Matrix::Zero(3, d);
  for (int c = 0; c < 3; ++c) means(c, c) = 1.0;
  Matrix data(600, d);
  for (int c = 0; c < 3; ++c) data.middleRows(200 * c, 200) = sample_vmf(means.row(c).transpose(), 50.0, 200, 5 + c).values();
  Matrix init = means;
  for (int c = 0; c < 3; ++c) {
    init.row(c) = std::cos(0.2) * means.row(c) + std::sin(0.2) * means.row((c + 1) % 3);
  }
  EMConfig cfg;
  cfg.kappa = 50.0;
  cfg.max_iters = 50;
  const EMResult res = soft_movmf_em(EmbeddingMatrix::from_unit_rows(data), init, cfg);
  for (int c = 0; c < 3; ++c) {
    EXPECT_GT(res.params.means.row(c).dot(means.row(c)), 0.99);
    EXPECT_NEAR(res.params.alphas[c], 1.0 / 3.0, 0.05);
  }
}


TEST(NormalizeRows, AxisVectors) {
  Matrix f(2, 2);
  f << 1, 0, 0, 2;
  EXPECT_EQ(normalize_rows(f).values(), Matrix::Identity(2, 2));
}

TEST(VmfLogDensity, DotProductTerms) {
  Vector u(3);
  u << 1, 0, 0;
  Vector w(3);
  w << 0, 1, 0;
  EXPECT_EQ(vmf_log_density(u, u, 10.0, false), 10.0);
  EXPECT_EQ(vmf_log_density(w, u, 10.0, false), 0.0);
}

TEST(VmfLogDensity, NormalisedDensityIntegratesToOneOnTwoSphere) {
  Vector u(3);
  u << 1, 0, 0;
  // Density depends only on the polar angle t to u.
  const double total = 2.0 * std::numbers::pi * simpson([&](double t) {
    Vector v(3);
    v << std::cos(t), std::sin(t), 0.0;
    return std::exp(vmf_log_density(v, u, 1.0, true)) * std::sin(t);
  }, 0.0, std::numbers::pi);
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(Posterior, IdenticalMeansGiveEqualHalves) {
  Rng rng(20);
  Matrix u(2, 3);
  u.row(0) = unit_rows(1, 3, rng);
  u.row(1) = u.row(0);
  const Posterior q = posterior(EmbeddingMatrix::from_unit_rows(unit_rows(15, 3, rng)), uniform_params(u, 7.0));
  for (Eigen::Index i = 0; i < 15; ++i) {
    EXPECT_EQ(q.values(i, 0), 0.5);
    EXPECT_EQ(q.values(i, 1), 0.5);
  }
}

TEST(Posterior, InvariantToPerRowShiftOfLogScores) {
  Rng rng(21);
  const Matrix scores = testing::gaussian_matrix(30, 4, rng, 20.0);
  Matrix shifted = scores;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.row(i).array() += rng.uniform(-500.0, 500.0);
  const Matrix a = posterior_from_log_scores(scores).values;
  const Matrix b = posterior_from_log_scores(shifted).values;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Objective, SinglePointAndAntipodalHandValues) {
  Matrix v(1, 2);
  v << 1, 0;
  const auto emb = EmbeddingMatrix::from_unit_rows(v);
  EXPECT_EQ(movmf_objective(emb, Posterior{Matrix::Ones(1, 1)}, uniform_params(v, 10.0)), 10.0);
  Matrix u(2, 2);
  u << 1, 0, -1, 0;
  EXPECT_NEAR(movmf_objective(emb, Posterior{Matrix::Constant(1, 2, 0.5)}, uniform_params(u, 10.0)),
              std::log(0.5), 1e-14);
}

TEST(SoftEm, IdenticalPointsSingleClusterIsFixedPoint) {
  Rng rng(22);
  const Matrix point = unit_rows(1, 4, rng);
  const Matrix v = point.replicate(10, 1);
  const EMResult res = soft_movmf_em(EmbeddingMatrix::from_unit_rows(v), unit_rows(1, 4, rng), EMConfig{});
  EXPECT_LT((res.params.means - point).norm(), 1e-12);
  EXPECT_EQ(res.params.alphas[0], 1.0);
  EXPECT_EQ(res.posterior.values, Matrix::Ones(10, 1));
}

TEST(SoftEm, RecoversTwoComponentMixture) {
  const int d = 5;
  Matrix truth = Matrix::Zero(2, d);
  truth(0, 0) = 1.0;
  truth(1, 1) = 1.0;
  Matrix data(400, d);
  data.topRows(200) = sample_vmf(truth.row(0).transpose(), 50.0, 200, 1).values();
  data.bottomRows(200) = sample_vmf(truth.row(1).transpose(), 50.0, 200, 2).values();
  Matrix init = truth;
  init.row(0) = std::cos(0.2) * truth.row(0) + std::sin(0.2) * truth.row(1);
  init.row(1) = std::cos(0.2) * truth.row(1) + std::sin(0.2) * truth.row(0);
  EMConfig cfg;
  cfg.kappa = 50.0;
  const EMResult res = soft_movmf_em(EmbeddingMatrix::from_unit_rows(data), init, cfg);
  for (int c = 0; c < 2; ++c) {
    EXPECT_GT(res.params.means.row(c).dot(truth.row(c)), 0.99);
    EXPECT_NEAR(res.params.alphas[c], 0.5, 0.05);
  }
}

TEST(SoftEm, ZeroIterationsKeepsMeans) {
  Rng rng(23);
  const Matrix init = unit_rows(3, 4, rng);
  EMConfig cfg;
  cfg.max_iters = 0;
  const EMResult res = soft_movmf_em(EmbeddingMatrix::from_unit_rows(unit_rows(12, 4, rng)), init, cfg);
  EXPECT_EQ(res.params.means, init);
  EXPECT_EQ(res.assignment.labels, argmax_rows(res.posterior.values).labels);
}

TEST(HardEm, AgreesWithSoftOnSeparableData) {
  Matrix truth = Matrix::Zero(2, 3);
  truth(0, 0) = 1.0;
  truth(1, 2) = 1.0;
  Matrix data(100, 3);
  data.topRows(50) = sample_vmf(truth.row(0).transpose(), 200.0, 50, 3).values();
  data.bottomRows(50) = sample_vmf(truth.row(1).transpose(), 200.0, 50, 4).values();
  const auto emb = EmbeddingMatrix::from_unit_rows(data);
  Matrix init = truth;
  init.row(0) = std::cos(0.1) * truth.row(0) + std::sin(0.1) * truth.row(1);
  EMConfig cfg;
  cfg.kappa = 20.0;
  EXPECT_EQ(hard_movmf_em(emb, init, cfg).assignment.labels, soft_movmf_em(emb, init, cfg).assignment.labels);
}

TEST(HardEm, SingleClusterMeanIsNormalisedSampleMean) {
  Rng rng(24);
  const Matrix v = unit_rows(30, 4, rng);
  const EMResult res = hard_movmf_em(EmbeddingMatrix::from_unit_rows(v), unit_rows(1, 4, rng), EMConfig{});
  const RowVector mean = v.colwise().sum();
  EXPECT_LT((res.params.means.row(0) - mean / mean.norm()).norm(), 1e-12);
}

TEST(HardEm, EquidistantPointGoesToLowerIndex) {
  Matrix v(1, 2);
  v << 0, 1;
  Matrix init(2, 2);
  init << 1, 0, -1, 0;
  EMConfig cfg;
  cfg.max_iters = 0;
  EXPECT_EQ(hard_movmf_em(EmbeddingMatrix::from_unit_rows(v), init, cfg).assignment.labels, std::vector<int>{0});
}

TEST(SampleVmf, UniformAtZeroConcentration) {
  Vector mu = Vector::Zero(3);
  mu[0] = 1.0;
  EXPECT_LT(sample_vmf(mu, 0.0, 10000, 5).values().colwise().mean().norm(), 0.1);
}

TEST(SampleVmf, ConcentratedAroundMeanAndDeterministic) {
  Vector mu = Vector::Zero(4);
  mu[2] = 1.0;
  const EmbeddingMatrix a = sample_vmf(mu, 200.0, 1000, 6);
  const RowVector mean = a.values().colwise().mean();
  EXPECT_LT(1.0 - mean.dot(mu.transpose()) / mean.norm(), 0.02);
  EXPECT_EQ(a.values(), sample_vmf(mu, 200.0, 1000, 6).values());
}

}  // namespace
}  // namespace dgn
