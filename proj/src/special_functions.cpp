#include "evreg/special_functions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace evreg {

namespace {

constexpr double kInvE = 0.36787944117144233;
constexpr double kInvSqrt2 = 0.70710678118654752;
constexpr double kInvSqrt2Pi = 0.39894228040143268;

// Continued fraction for the regularized incomplete beta, evaluated with
// the modified Lentz scheme. Valid for x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 600;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("beta_cdf: continued fraction did not converge (a=" +
                           std::to_string(a) + ", b=" + std::to_string(b) + ")");
}

}  // namespace

double lambert_w0(double z, const ScalarTolerance& tol) {
  if (std::isnan(z) || z < -kInvE) {
    throw std::domain_error("lambert_w0: argument below -1/e");
  }
  if (z == 0.0) return 0.0;

  double w;
  if (z < 0.0) {
    // Branch-point expansion in p = sqrt(2 (1 + e z)) keeps the seed on W0.
    const double p = std::sqrt(2.0 * (1.0 + z / kInvE));
    w = -1.0 + p - p * p / 3.0 + 11.0 * p * p * p / 72.0;
  } else if (z > 1e10) {
    // W ~ log z - log log z for large arguments.
    const double lz = std::log(z);
    w = lz - std::log(lz);
  } else {
    w = std::log1p(z);
  }

  for (int it = 0; it < tol.max_iter; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    // Halley stalls at the branch point where f' vanishes; the seed series
    // is already exact there, so accept on the residual as well.
    if (std::fabs(f) <= 1e-15 * std::fabs(z)) return w;
    const double wp1 = w + 1.0;
    // Halley step for f(w) = w e^w - z.
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    w -= step;
    if (std::fabs(step) <= tol.abs_tol * (1.0 + std::fabs(w))) return w;
  }
  throw std::runtime_error("lambert_w0: no convergence at z=" + std::to_string(z));
}

double beta_cdf(double q, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::domain_error("beta_cdf: shape parameters must be positive");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::domain_error("beta_cdf: q must lie in [0, 1]");
  }
  if (q == 0.0) return 0.0;
  if (q == 1.0) return 1.0;
  const double lf = a * std::log(q) + b * std::log1p(-q) - log_beta(a, b);
  if (q < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(lf) * beta_cf(a, b, q) / a;
  }
  return 1.0 - std::exp(lf) * beta_cf(b, a, 1.0 - q) / b;
}

double beta_pdf(double q, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::domain_error("beta_pdf: shape parameters must be positive");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::domain_error("beta_pdf: q must lie in [0, 1]");
  }
  if (q == 0.0) {
    if (a < 1.0) return std::numeric_limits<double>::infinity();
    if (a == 1.0) return b;
    return 0.0;
  }
  if (q == 1.0) {
    if (b < 1.0) return std::numeric_limits<double>::infinity();
    if (b == 1.0) return a;
    return 0.0;
  }
  return std::exp((a - 1.0) * std::log(q) + (b - 1.0) * std::log1p(-q) -
                  log_beta(a, b));
}

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie strictly in (0, 1)");
  }

  // Rational approximation in three regions (central plus both tails).
  static const double A[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double B[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double C[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double D[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  double x;
  if (p < kLow) {
    const double u = std::sqrt(-2.0 * std::log(p));
    x = (((((C[0] * u + C[1]) * u + C[2]) * u + C[3]) * u + C[4]) * u + C[5]) /
        ((((D[0] * u + D[1]) * u + D[2]) * u + D[3]) * u + 1.0);
  } else if (p <= 1.0 - kLow) {
    const double u = p - 0.5;
    const double r = u * u;
    x = (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u /
        (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0);
  } else {
    const double u = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((C[0] * u + C[1]) * u + C[2]) * u + C[3]) * u + C[4]) * u + C[5]) /
        ((((D[0] * u + D[1]) * u + D[2]) * u + D[3]) * u + 1.0);
  }

  // One Halley refinement against the erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be positive");
  return std::lgamma(x);
}

double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double dirichlet_log_density(std::span<const double> w,
                             std::span<const double> alpha) {
  if (w.size() != alpha.size()) {
    throw std::invalid_argument("dirichlet_log_density: length mismatch");
  }
  if (w.empty()) {
    throw std::invalid_argument("dirichlet_log_density: empty arguments");
  }
  double sum_alpha = 0.0;
  double lp = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(alpha[i] > 0.0)) {
      throw std::domain_error("dirichlet_log_density: alpha must be positive");
    }
    if (!(w[i] > 0.0)) return -std::numeric_limits<double>::infinity();
    sum_alpha += alpha[i];
    lp += (alpha[i] - 1.0) * std::log(w[i]) - log_gamma(alpha[i]);
  }
  return lp + log_gamma(sum_alpha);
}

}  // namespace evreg
