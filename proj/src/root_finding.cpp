#include "evreg/root_finding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace evreg {

RootResult brent(const std::function<double(double)>& f, double lo, double hi,
                 double xtol, int max_iter) {
  double a = lo;
  double b = hi;
  double fa = f(a);
  double fb = f(b);
  if (fa == 0.0) return {a, 0, true};
  if (fb == 0.0) return {b, 0, true};
  if ((fa > 0.0) == (fb > 0.0)) {
    throw BracketError("brent: root not bracketed on [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }

  double c = a;
  double fc = fa;
  double d = b - a;
  double e = d;
  for (int it = 1; it <= max_iter; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 =
        2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) + 0.5 * xtol;
    const double xm = 0.5 * (c - b);
    if (std::fabs(xm) <= tol1 || fb == 0.0) return {b, it, true};

    if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
      // Inverse quadratic interpolation, falling back to secant.
      const double s = fb / fa;
      double p, qd;
      if (a == c) {
        p = 2.0 * xm * s;
        qd = 1.0 - s;
      } else {
        const double q = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        qd = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) qd = -qd;
      p = std::fabs(p);
      const double min1 = 3.0 * xm * qd - std::fabs(tol1 * qd);
      const double min2 = std::fabs(e * qd);
      if (2.0 * p < std::min(min1, min2)) {
        e = d;
        d = p / qd;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    if (std::fabs(d) > tol1) {
      b += d;
    } else {
      b += (xm > 0.0 ? tol1 : -tol1);
    }
    fb = f(b);
  }
  return {b, max_iter, false};
}

double invert_monotone_cdf(const std::function<double(double)>& cdf, double q,
                           double hint, const CdfInversionConfig& cfg) {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::domain_error("invert_monotone_cdf: q must lie strictly in (0, 1)");
  }
  const double lo_lim = cfg.lower_limit;
  const double hi_lim = cfg.upper_limit;
  double lo = std::clamp(hint, lo_lim, hi_lim);
  double hi = lo;
  double flo = cdf(lo);
  double fhi = flo;

  while (flo > q && lo > lo_lim) {
    lo = std::max(lo / 8.0, lo_lim);
    flo = cdf(lo);
  }
  while (fhi < q && hi < hi_lim) {
    hi = std::min(hi * 8.0, hi_lim);
    fhi = cdf(hi);
  }
  if (flo > q || fhi < q) {
    throw BracketError("invert_monotone_cdf: no bracket for q=" + std::to_string(q) +
                       " on [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "] with cdf range [" + std::to_string(flo) + ", " +
                       std::to_string(fhi) + "]");
  }

  const RootResult r =
      brent([&](double y) { return cdf(y) - q; }, lo, hi, 1e-13, 300);
  const double resid = std::fabs(cdf(r.x) - q);
  if (resid > cfg.cdf_tol) {
    throw BracketError("invert_monotone_cdf: residual " + std::to_string(resid) +
                       " above tolerance at y=" + std::to_string(r.x));
  }
  return r.x;
}

}  // namespace evreg
