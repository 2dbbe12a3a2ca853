#include "dgn/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dgn/error.hpp"

namespace dgn {
namespace {

constexpr double kRescale = 1e200;

double log_bessel_i_series(double nu, double x) {
  // I_nu(x) = (x/2)^nu / Gamma(nu+1) * sum_k (x^2/4)^k / (k! (nu+1)_k)
  const double quarter_x2 = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  double log_scale = 0.0;
  for (long k = 0;; ++k) {
    term *= quarter_x2 / ((k + 1.0) * (nu + k + 1.0));
    sum += term;
    if (sum > kRescale) {
      sum /= kRescale;
      term /= kRescale;
      log_scale += std::log(kRescale);
    }
    // Past the peak the ratio is below one and the tail is geometric.
    const double ratio = quarter_x2 / ((k + 2.0) * (nu + k + 2.0));
    if (ratio < 1.0 && term * ratio / (1.0 - ratio) < sum * 1e-17) break;
  }
  return nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) + log_scale + std::log(sum);
}

double log_bessel_i_hankel(double nu, double x) {
  // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

}  // namespace

double log_bessel_i(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "log_bessel_i requires nu >= 0 and x >= 0");
  }
  if (x == 0.0) {
    return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  if (x > 700.0 && x > 25.0 * (nu * nu + 1.0)) return log_bessel_i_hankel(nu, x);
  return log_bessel_i_series(nu, x);
}

double vmf_log_normalizer(int dim, double kappa) {
  if (dim < 2) throw Error(ErrorKind::InvalidArgument, "vMF dimension must be >= 2");
  if (!(kappa >= 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be >= 0");
  const double half_d = 0.5 * dim;
  if (kappa == 0.0) {
    // 1 / (2 pi^(d/2) / Gamma(d/2))
    return std::lgamma(half_d) - std::log(2.0) - half_d * std::log(std::numbers::pi);
  }
  const double nu = half_d - 1.0;
  return nu * std::log(kappa) - half_d * std::log(2.0 * std::numbers::pi) -
         log_bessel_i(nu, kappa);
}

}  // namespace dgn
