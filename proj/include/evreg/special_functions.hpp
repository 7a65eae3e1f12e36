#pragma once

#include <span>

namespace evreg {

// Absolute tolerance and iteration cap shared by the scalar iterative solvers.
struct ScalarTolerance {
  double abs_tol = 1e-12;
  int max_iter = 100;
};

// Principal branch W0 of w * exp(w) = z, defined for z >= -1/e.
double lambert_w0(double z, const ScalarTolerance& tol = {});

// Regularized incomplete beta I_q(a, b), equal to the Beta(a, b) CDF at q.
double beta_cdf(double q, double a, double b);

// Beta(a, b) density at q. Boundary values follow the pointwise limit with
// the convention 0^0 = 1, so be(0; 1, b) = b while be(0; a > 1, b) = 0.
double beta_pdf(double q, double a, double b);

double normal_pdf(double x);
double normal_cdf(double x);

// Inverse standard normal CDF; p must lie strictly inside (0, 1).
double normal_quantile(double p);

double log_gamma(double x);
double log_beta(double a, double b);

// Log density of Dirichlet(alpha) at w. Lengths must match and every
// alpha[i] must be positive. Any w[i] <= 0 yields -infinity: boundary
// points are treated as unsupported rather than evaluated as a limit.
double dirichlet_log_density(std::span<const double> w,
                             std::span<const double> alpha);

}  // namespace evreg
