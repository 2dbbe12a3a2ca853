#pragma once

namespace dgn {

/// log I_nu(x) for nu >= 0, x >= 0, without overflow for large x or
/// underflow for large nu. Uses a log-scaled power series, switching to the
/// large-argument (Hankel) expansion once x dominates nu^2.
double log_bessel_i(double nu, double x);

/// log C_d(kappa), the normaliser of the von Mises-Fisher density on the
/// unit sphere in R^d:
///   C_d(kappa) = kappa^(d/2-1) / ((2 pi)^(d/2) I_(d/2-1)(kappa)).
/// At kappa = 0 this is the reciprocal surface area of the sphere.
double vmf_log_normalizer(int dim, double kappa);

}  // namespace dgn
