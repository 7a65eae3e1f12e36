#include "evreg/ev_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "evreg/random.hpp"
#include "evreg/root_finding.hpp"
#include "evreg/special_functions.hpp"

namespace evreg {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752;

double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void check_point(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) {
    throw std::domain_error("ev_models: coordinates must be positive");
  }
}

// Exponent of the joint CDF shifted by the covariate margin:
// log G(x, y) + 1/x. Shared by the conditional CDFs, which multiply a
// model-specific bracket by exp of this quantity.
struct CondParts {
  double log_bracket;
  double log_scale;
};

CondParts logistic_parts(double alpha, double x, double y) {
  // lx, ly are the logs of x^{-1/alpha} and y^{-1/alpha}.
  const double lx = -std::log(x) / alpha;
  const double ly = -std::log(y) / alpha;
  const double L = logaddexp(lx, ly);
  const double V = std::exp(alpha * L);
  // bracket = (x^{-1/a} + y^{-1/a})^{a-1} x^{1-1/a}, kept in log form.
  const double log_bracket = (alpha - 1.0) * L + (1.0 - 1.0 / alpha) * std::log(x);
  return {log_bracket, -V + 1.0 / x};
}

}  // namespace

std::string model_name(const EvModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Logistic>) return "logistic";
        if constexpr (std::is_same_v<T, HuslerReiss>) return "husler-reiss";
        return "coles-tawn";
      },
      model);
}

void validate(const EvModel& model) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Logistic>) {
          if (!(m.alpha > 0.0 && m.alpha <= 1.0)) {
            throw std::domain_error("logistic: alpha must lie in (0, 1]");
          }
        } else if constexpr (std::is_same_v<T, HuslerReiss>) {
          if (!(m.lambda > 0.0)) {
            throw std::domain_error("husler-reiss: lambda must be positive");
          }
        } else {
          if (!(m.alpha > 0.0) || !(m.beta > 0.0)) {
            throw std::domain_error("coles-tawn: alpha and beta must be positive");
          }
        }
      },
      model);
}

double joint_cdf(const EvModel& model, double x, double y) {
  validate(model);
  check_point(x, y);
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Logistic>) {
          if (m.alpha == 1.0) return std::exp(-1.0 / x - 1.0 / y);
          const double lx = -std::log(x) / m.alpha;
          const double ly = -std::log(y) / m.alpha;
          return std::exp(-std::exp(m.alpha * logaddexp(lx, ly)));
        } else if constexpr (std::is_same_v<T, HuslerReiss>) {
          const double lam = m.lambda;
          const double a = lam + std::log(y / x) / (2.0 * lam);
          const double b = lam + std::log(x / y) / (2.0 * lam);
          return std::exp(-normal_cdf(a) / x - normal_cdf(b) / y);
        } else {
          const double q = m.alpha * x / (m.alpha * x + m.beta * y);
          const double v = (1.0 - beta_cdf(q, m.alpha + 1.0, m.beta)) / x +
                           beta_cdf(q, m.alpha, m.beta + 1.0) / y;
          return std::exp(-v);
        }
      },
      model);
}

double conditional_cdf(const EvModel& model, double y, double x) {
  validate(model);
  check_point(x, y);
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Logistic>) {
          if (m.alpha == 1.0) return std::exp(-1.0 / y);
          const CondParts p = logistic_parts(m.alpha, x, y);
          return clamp01(std::exp(p.log_bracket + p.log_scale));
        } else if constexpr (std::is_same_v<T, HuslerReiss>) {
          const double lam = m.lambda;
          const double a = lam + std::log(y / x) / (2.0 * lam);
          const double b = lam + std::log(x / y) / (2.0 * lam);
          const double bracket = normal_cdf(a) + normal_pdf(a) / (2.0 * lam) -
                                 (x / y) * normal_pdf(b) / (2.0 * lam);
          if (bracket <= 0.0) return 0.0;
          // log G + 1/x collapses to Phi(-a)/x - Phi(b)/y.
          const double expo = normal_sf(a) / x - normal_cdf(b) / y;
          return clamp01(bracket * std::exp(std::min(expo, 700.0)));
        } else {
          const double al = m.alpha;
          const double be = m.beta;
          const double q = al * x / (al * x + be * y);
          const double g = (al + be + 2.0) * (al + be + 1.0);
          const double bracket =
              1.0 - beta_cdf(q, al + 1.0, be) +
              (al + 1.0) * be / g * beta_pdf(q, al + 2.0, be + 1.0) -
              (x / y) * al * (be + 1.0) / g * beta_pdf(q, al + 1.0, be + 2.0);
          if (bracket <= 0.0) return 0.0;
          const double expo = beta_cdf(q, al + 1.0, be) / x -
                              beta_cdf(q, al, be + 1.0) / y;
          return clamp01(bracket * std::exp(std::min(expo, 700.0)));
        }
      },
      model);
}

std::vector<FrechetPair> sample(const EvModel& model, std::size_t n,
                                std::uint64_t seed) {
  validate(model);
  Rng rng(seed);
  std::vector<FrechetPair> out;
  out.reserve(n);
  const CdfInversionConfig cfg;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 / std::log(rng.uniform());
    const double u = rng.uniform();
    const double y = invert_monotone_cdf(
        [&](double yy) { return conditional_cdf(model, yy, x); }, u, x, cfg);
    out.push_back({x, y});
  }
  return out;
}

double independence_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::domain_error("independence_quantile: q must lie in (0, 1)");
  }
  return -1.0 / std::log(q);
}

double perfect_dependence_quantile(std::span<const double> x) {
  if (x.empty()) {
    throw std::invalid_argument("perfect_dependence_quantile: empty covariates");
  }
  double m = x[0];
  for (const double v : x) {
    if (!(v > 0.0)) {
      throw std::domain_error("perfect_dependence_quantile: covariates must be positive");
    }
    m = std::min(m, v);
  }
  return m;
}

double softmax_conditional_cdf(double y, std::span<const double> x, double N) {
  if (x.empty()) {
    throw std::invalid_argument("softmax_conditional_cdf: empty covariates");
  }
  if (!(y > 0.0)) throw std::domain_error("softmax_conditional_cdf: y must be positive");
  if (!(N > 0.0)) throw std::domain_error("softmax_conditional_cdf: N must be positive");
  double lse_x = -std::numeric_limits<double>::infinity();
  for (const double v : x) {
    if (!(v > 0.0)) {
      throw std::domain_error("softmax_conditional_cdf: covariates must be positive");
    }
    lse_x = logaddexp(lse_x, N / v);
  }
  const double lse_all = logaddexp(N / y, lse_x);
  const double p = static_cast<double>(x.size());
  return std::exp((-1.0 / N - p) * (lse_all - lse_x));
}

}  // namespace evreg
