#include <gtest/gtest.h>

#include <cmath>

#include "dgn/baselines.hpp"
#include "dgn/error.hpp"
#include "dgn/losses.hpp"
#include "dgn/network.hpp"
#include "test_util.hpp"

namespace dgn {
namespace {

using testing::central_difference;
using testing::gaussian_matrix;
using testing::random_stochastic;
using testing::relative_error;
using testing::unit_rows;

constexpr double kGradTol = 1e-5;

SparseLabels random_labels(Eigen::Index n, Eigen::Index k, std::size_t m, Rng& rng) {
  SparseLabels labels;
  for (const std::size_t i : rng.sample_without_replacement(static_cast<std::size_t>(n), m)) {
    labels.indices.push_back(static_cast<int>(i));
    labels.classes.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(k))));
  }
  return labels;
}

MoVMFParams random_theta(Eigen::Index k, Eigen::Index d, Rng& rng) {
  MoVMFParams theta;
  theta.means = unit_rows(k, d, rng);
  theta.alphas = random_stochastic(1, k, rng).row(0).transpose();
  theta.kappa = rng.uniform(0.5, 20.0);
  return theta;
}

TEST(Tce, BetaOneEqualsPceBitwise) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const ProbMatrix p = softmax(gaussian_matrix(30, 5, rng, 3.0));
    const SparseLabels labels = random_labels(30, 5, 8, rng);
    const LossValue a = tce_loss(p, labels, 1.0);
    const LossValue b = pce_loss(p, labels);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.grad, b.grad);
  }
}

TEST(Tce, HandComputedTruncation) {
  ProbMatrix p{Matrix(2, 2)};
  p.values << 0.9, 0.1, 0.3, 0.7;
  const SparseLabels labels{{0, 1}, {0, 0}};
  const LossValue out = tce_loss(p, labels, 0.8);
  EXPECT_NEAR(out.value, 0.5 * (-std::log(0.8) - std::log(0.3)), 1e-15);
  EXPECT_EQ(out.grad.row(0).norm(), 0.0);
  EXPECT_NEAR(out.grad(1, 0), -0.5 / 0.3, 1e-15);
  const std::vector<double> terms = tce_point_terms(p, labels, 0.8);
  EXPECT_NEAR(terms[0], -std::log(0.8), 1e-15);
  EXPECT_NEAR(terms[1], -std::log(0.3), 1e-15);
}

TEST(Tce, RejectsBadBetaAndEmptyLabels) {
  ProbMatrix p{Matrix::Constant(2, 2, 0.5)};
  const SparseLabels labels{{0}, {1}};
  for (double beta : {0.0, -0.1, 1.5, std::nan("")}) {
    try {
      tce_loss(p, labels, beta);
      FAIL() << beta;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidBeta);
    }
  }
  try {
    tce_loss(p, SparseLabels{}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyLabelSet);
  }
}

TEST(SparseLabelsValidate, RejectsDuplicatesAndRange) {
  EXPECT_THROW((SparseLabels{{0, 0}, {1, 1}}.validate(3)), Error);
  EXPECT_THROW((SparseLabels{{5}, {1}}.validate(3)), Error);
  EXPECT_THROW((SparseLabels{{0, 1}, {1}}.validate(3)), Error);
  EXPECT_NO_THROW((SparseLabels{{2, 0}, {1, 1}}.validate(3)));
}

TEST(Tce, GradientMatchesFiniteDifferences) {
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(mix_seed(1, static_cast<std::uint64_t>(trial)));
    const Matrix logits = gaussian_matrix(12, 4, rng);
    const SparseLabels labels = random_labels(12, 4, 6, rng);
    const double beta = rng.uniform(0.3, 1.0);
    // Differentiate through the softmax so that P stays on the simplex.
    auto f = [&](const Matrix& z) { return tce_loss(softmax(z), labels, beta).value; };
    const ProbMatrix p = softmax(logits);
    const Matrix analytic = softmax_backward(p, tce_loss(p, labels, beta).grad);
    const Matrix numeric = central_difference(f, logits);
    // Skip instances where a point sits within the FD step of the kink.
    bool near_kink = false;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      near_kink |= std::abs(p.values(labels.indices[j], labels.classes[j]) - beta) < 1e-3;
    }
    if (near_kink) continue;
    ++checked;
    EXPECT_LT(relative_error(analytic, numeric), kGradTol) << trial;
  }
  EXPECT_GE(checked, 45);
}

TEST(Vmf, OneHotEqualsNegatedHardObjectiveExactly) {
  Rng rng(3);
  const Matrix f = gaussian_matrix(40, 6, rng);
  const MoVMFParams theta = random_theta(4, 6, rng);
  const EmbeddingMatrix v = normalize_rows(f);
  const Assignment z = argmax_rows(log_scores(v, theta));
  EXPECT_EQ(vmf_loss(f, Posterior{one_hot(z, 4)}, theta).value, -hard_objective(v, z, theta));
}

TEST(Vmf, ScaleInvariantValue) {
  Rng rng(4);
  const Matrix f = gaussian_matrix(20, 5, rng);
  const MoVMFParams theta = random_theta(3, 5, rng);
  const Posterior q{random_stochastic(20, 3, rng)};
  EXPECT_NEAR(vmf_loss(f, q, theta).value, vmf_loss(3.7 * f, q, theta).value, 1e-10);
}

TEST(Vmf, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(mix_seed(2, static_cast<std::uint64_t>(trial)));
    const Matrix f = gaussian_matrix(15, 2 + static_cast<int>(rng.index(7)), rng);
    const MoVMFParams theta = random_theta(3, f.cols(), rng);
    const Posterior q{random_stochastic(15, 3, rng)};
    const Matrix numeric = central_difference([&](const Matrix& x) { return vmf_loss(x, q, theta).value; }, f);
    EXPECT_LT(relative_error(vmf_loss(f, q, theta).grad, numeric), kGradTol) << trial;
  }
}

TEST(Dis, HandValueAndOrthogonalMeans) {
  MoVMFParams theta;
  theta.means = Matrix::Identity(3, 3);
  theta.alphas = Vector::Constant(3, 1.0 / 3.0);
  EXPECT_EQ(dis_loss(theta).value, 0.0);
  Matrix u(2, 2);
  u << 1, 0, std::sqrt(0.5), std::sqrt(0.5);
  theta.means = u;
  theta.alphas = Vector::Constant(2, 0.5);
  EXPECT_NEAR(dis_loss(theta).value, std::sqrt(0.5), 1e-15);
  theta.means = Matrix::Identity(1, 3);
  theta.alphas = Vector::Ones(1);
  EXPECT_THROW(dis_loss(theta), Error);
}

TEST(Dis, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(mix_seed(3, static_cast<std::uint64_t>(trial)));
    MoVMFParams theta = random_theta(2 + static_cast<int>(rng.index(5)), 6, rng);
    auto f = [&](const Matrix& m) {
      MoVMFParams t = theta;
      t.means = m;
      return dis_loss(t).value;
    };
    EXPECT_LT(relative_error(dis_loss(theta).grad, central_difference(f, theta.means)), kGradTol) << trial;
  }
}

TEST(Dis, ThroughMeansMatchesFrozenValueAndFiniteDifferences) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(mix_seed(4, static_cast<std::uint64_t>(trial)));
    const Matrix f = gaussian_matrix(14, 5, rng);
    const Posterior q{random_stochastic(14, 3, rng)};
    const LossValue out = dis_loss_through_means(f, q);

    const Matrix sums = q.values.transpose() * normalize_rows(f).values();
    MoVMFParams theta;
    theta.means = normalize_rows(sums).values();
    theta.alphas = Vector::Constant(3, 1.0 / 3.0);
    EXPECT_NEAR(out.value, dis_loss(theta).value, 1e-12);

    const Matrix numeric = central_difference([&](const Matrix& x) { return dis_loss_through_means(x, q).value; }, f);
    EXPECT_LT(relative_error(out.grad, numeric), kGradTol) << trial;
  }
}

TEST(Con, HandValueAndGradient) {
  ProbMatrix p{Matrix(2, 2)};
  p.values << 0.8, 0.2, 0.4, 0.6;
  Matrix q(2, 2);
  q << 1, 0, 0.5, 0.5;
  const LossValue out = con_loss(p, Posterior{q});
  EXPECT_NEAR(out.value, 0.5 * (-std::log(0.8) - 0.5 * std::log(0.4) - 0.5 * std::log(0.6)), 1e-15);
  EXPECT_NEAR(out.grad(0, 0), (0.8 - 1.0) / 2.0, 1e-15);
  EXPECT_NEAR(out.grad(1, 1), (0.6 - 0.5) / 2.0, 1e-15);
}

TEST(Con, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(mix_seed(5, static_cast<std::uint64_t>(trial)));
    const Matrix logits = gaussian_matrix(10, 4, rng, 2.0);
    const Posterior q{random_stochastic(10, 4, rng)};
    const Matrix numeric = central_difference([&](const Matrix& z) { return con_loss(softmax(z), q).value; }, logits);
    EXPECT_LT(relative_error(con_loss(softmax(logits), q).grad, numeric), kGradTol) << trial;
  }
}

TEST(SoftmaxBackward, MatchesFiniteDifferences) {
  Rng rng(6);
  const Matrix logits = gaussian_matrix(7, 5, rng);
  const Matrix weights = gaussian_matrix(7, 5, rng);
  auto f = [&](const Matrix& z) { return softmax(z).values.cwiseProduct(weights).sum(); };
  EXPECT_LT(relative_error(softmax_backward(softmax(logits), weights), central_difference(f, logits)), kGradTol);
}

TEST(GmmNll, GradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(mix_seed(7, static_cast<std::uint64_t>(trial)));
    const Matrix f = gaussian_matrix(12, 4, rng);
    GMMParams g;
    g.means = gaussian_matrix(3, 4, rng);
    g.weights = random_stochastic(1, 3, rng).row(0).transpose();
    g.variances = Vector::Constant(3, 0.5) + rng.uniform() * Vector::Ones(3);
    const Posterior q{random_stochastic(12, 3, rng)};
    const LossValue out = gmm_nll_loss(f, q, g);
    EXPECT_NEAR(out.value, -gmm_objective(f, q, g), 1e-12);
    const Matrix numeric = central_difference([&](const Matrix& x) { return gmm_nll_loss(x, q, g).value; }, f);
    EXPECT_LT(relative_error(out.grad, numeric), kGradTol) << trial;
  }
}

TEST(TotalLoss, SumsEnabledTermsWithUnitWeights) {
  const LossReport parts{1.0, 2.0, 3.0, 4.0, 0.0};
  EXPECT_EQ(total_loss(parts).total, 10.0);
  const LossReport only_tce = total_loss(parts, LossToggles{true, false, false, false});
  EXPECT_EQ(only_tce.total, 1.0);
  EXPECT_EQ(only_tce.vmf, 0.0);
  EXPECT_EQ(only_tce.con, 0.0);
  EXPECT_EQ(total_loss(parts, LossToggles{false, true, false, true}).total, 6.0);
}


TEST(Pce, HandValues) {
  ProbMatrix p{Matrix(2, 2)};
  p.values << 1.0, 0.0, 0.5, 0.5;
  EXPECT_EQ(pce_loss(p, SparseLabels{{0}, {0}}).value, 0.0);
  EXPECT_NEAR(pce_loss(p, SparseLabels{{1}, {0}}).value, std::log(2.0), 1e-15);
  p.values << 0.5, 0.5, 0.75, 0.25;
  EXPECT_NEAR(pce_loss(p, SparseLabels{{0, 1}, {0, 1}}).value, 0.5 * (std::log(2.0) + std::log(4.0)), 1e-15);
}

TEST(Tce, InactiveTruncationMatchesPceGradient) {
  ProbMatrix p{Matrix(1, 2)};
  p.values << 0.5, 0.5;
  const SparseLabels labels{{0}, {0}};
  EXPECT_NEAR(tce_loss(p, labels, 0.8).value, std::log(2.0), 1e-15);
  EXPECT_EQ(tce_loss(p, labels, 0.8).grad, pce_loss(p, labels).grad);
}

TEST(Vmf, HandValues) {
  Matrix f(1, 2);
  f << 2, 0;
  MoVMFParams theta;
  theta.means = Matrix::Identity(1, 2);
  theta.alphas = Vector::Ones(1);
  theta.kappa = 10.0;
  EXPECT_EQ(vmf_loss(f, Posterior{Matrix::Ones(1, 1)}, theta).value, -10.0);
  theta.means.resize(2, 2);
  theta.means << 1, 0, -1, 0;
  theta.alphas = Vector::Constant(2, 0.5);
  EXPECT_NEAR(vmf_loss(f, Posterior{Matrix::Constant(1, 2, 0.5)}, theta).value, -std::log(0.5), 1e-14);
}

TEST(Dis, IdenticalAndPlanarMeans) {
  MoVMFParams theta;
  theta.means.resize(2, 2);
  theta.means << 1, 0, 1, 0;
  theta.alphas = Vector::Constant(2, 0.5);
  EXPECT_EQ(dis_loss(theta).value, 1.0);
  theta.means.resize(3, 2);
  for (int c = 0; c < 3; ++c) {
    theta.means(c, 0) = std::cos(2.0 * std::numbers::pi * c / 3.0);
    theta.means(c, 1) = std::sin(2.0 * std::numbers::pi * c / 3.0);
  }
  theta.alphas = Vector::Constant(3, 1.0 / 3.0);
  EXPECT_NEAR(dis_loss(theta).value, -0.5, 1e-15);
}

TEST(Con, UniformAndOneHotHandValues) {
  EXPECT_NEAR(con_loss(ProbMatrix{Matrix::Constant(1, 2, 0.5)}, Posterior{Matrix::Constant(1, 2, 0.5)}).value,
              std::log(2.0), 1e-15);
  Matrix q = Matrix::Zero(1, 4);
  q(0, 2) = 1.0;
  EXPECT_NEAR(con_loss(ProbMatrix{Matrix::Constant(1, 4, 0.25)}, Posterior{q}).value, std::log(4.0), 1e-15);
}

TEST(TotalLoss, HandSums) {
  EXPECT_EQ(total_loss(LossReport{}).total, 0.0);
  EXPECT_NEAR(total_loss(LossReport{0.2, -10.0, 0.0, 0.7, 0.0}).total, -9.1, 1e-12);
}

}  // namespace
}  // namespace dgn
