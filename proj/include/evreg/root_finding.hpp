#pragma once

#include <functional>
#include <stdexcept>

namespace evreg {

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RootResult {
  double x = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Brent's method on [lo, hi]. f(lo) and f(hi) must have opposite signs.
RootResult brent(const std::function<double(double)>& f, double lo, double hi,
                 double xtol = 1e-13, int max_iter = 200);

struct CdfInversionConfig {
  double lower_limit = 1e-8;
  double upper_limit = 1e12;
  double cdf_tol = 1e-9;
};

// Solve cdf(y) = q for a nondecreasing cdf. A bracket is grown geometrically
// from the hint before Brent runs; the result satisfies |cdf(y) - q| <=
// cdf_tol or a BracketError carries the failed bracket state.
double invert_monotone_cdf(const std::function<double(double)>& cdf, double q,
                           double hint, const CdfInversionConfig& cfg = {});

}  // namespace evreg
