#include "evreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "evreg/special_functions.hpp"
#include "evreg/text_io.hpp"

namespace evreg {

namespace {

ResidualReport build_report(const std::vector<FrechetPair>& pairs,
                            const ConditionalCdf& cdf, double threshold_u) {
  ResidualReport rep;
  rep.threshold_u = threshold_u;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].x + pairs[i].y <= threshold_u) continue;
    ResidualRow row;
    row.index = i;
    row.x = pairs[i].x;
    row.y = pairs[i].y;
    row.ghat = cdf(pairs[i].y, pairs[i].x);
    row.residual = normal_quantile(std::clamp(row.ghat, 1e-10, 1.0 - 1e-10));
    rep.rows.push_back(row);
  }
  const std::size_t n = rep.rows.size();
  if (n == 0) return rep;

  // Plotting positions (rank - 1/2) / n assigned through the residual order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rep.rows[a].residual < rep.rows[b].residual;
  });
  std::vector<double> sorted(n);
  for (std::size_t r = 0; r < n; ++r) {
    rep.rows[order[r]].theoretical =
        normal_quantile((static_cast<double>(r) + 0.5) / static_cast<double>(n));
    sorted[r] = rep.rows[order[r]].residual;
  }
  rep.ks_statistic = ks_statistic_normal(sorted);
  rep.ks_pvalue = kolmogorov_pvalue(rep.ks_statistic, n);
  return rep;
}

}  // namespace

ResidualReport quantile_residuals(const std::vector<FrechetPair>& pairs,
                                  const ConditionalCdf& cdf, double threshold_u) {
  return build_report(pairs, cdf, threshold_u);
}

ResidualReport posterior_quantile_residuals(const std::vector<FrechetPair>& pairs,
                                            const McmcChain& chain) {
  if (chain.d != 2) {
    throw std::invalid_argument("posterior residuals: requires d = 2 chains");
  }
  const std::vector<BernsteinAngularDensity> densities = thinned_densities(chain, 200);
  const ConditionalCdf cdf = [&densities](double y, double x) {
    double acc = 0.0;
    for (const auto& den : densities) acc += conditional_cdf_p1(den, y, x);
    return acc / static_cast<double>(densities.size());
  };
  return build_report(pairs, cdf, chain.threshold_u);
}

double ks_statistic_normal(std::vector<double> residuals) {
  const std::size_t n = residuals.size();
  if (n == 0) throw std::invalid_argument("ks statistic: empty sample");
  std::sort(residuals.begin(), residuals.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf(residuals[i]);
    const double lo = f - static_cast<double>(i) / static_cast<double>(n);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n) - f;
    d = std::max(d, std::max(lo, hi));
  }
  return d;
}

double kolmogorov_pvalue(double d, std::size_t n) {
  if (n == 0) throw std::invalid_argument("kolmogorov_pvalue: empty sample");
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Theta-function form; the alternating series loses everything to
    // cancellation as lambda shrinks.
    const double pi = 3.14159265358979323846;
    const double t = std::exp(-pi * pi / (8.0 * lambda * lambda));
    const double t8 = std::pow(t, 8.0);
    const double t16 = t8 * t8;
    const double cdf = std::sqrt(2.0 * pi) / lambda *
                       (t * (1.0 + t8 * (1.0 + t16 * (1.0 + t8 * t16))));
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double q = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    q += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

void write_residuals_csv(const std::filesystem::path& path,
                         const ResidualReport& report) {
  std::ostringstream out;
  out << "# u=" << fmt12(report.threshold_u) << '\n';
  out << "# ks_statistic=" << fmt12(report.ks_statistic) << '\n';
  out << "# ks_pvalue=" << fmt12(report.ks_pvalue) << '\n';
  out << "index,x,y,ghat,residual,theoretical\n";
  for (const auto& r : report.rows) {
    out << r.index << ',' << fmt12(r.x) << ',' << fmt12(r.y) << ',' << fmt12(r.ghat)
        << ',' << fmt12(r.residual) << ',' << fmt12(r.theoretical) << '\n';
  }
  atomic_write_text(path, out.str());
}

}  // namespace evreg
