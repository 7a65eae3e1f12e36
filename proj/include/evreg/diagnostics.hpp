#pragma once

#include <filesystem>
#include <vector>

#include "evreg/ev_models.hpp"
#include "evreg/manifold.hpp"
#include "evreg/mcmc.hpp"

namespace evreg {

struct ResidualRow {
  std::size_t index = 0;  // position in the input pair list
  double x = 0.0;
  double y = 0.0;
  double ghat = 0.0;        // fitted conditional CDF at (y, x)
  double residual = 0.0;    // normal quantile of ghat
  double theoretical = 0.0; // normal quantile at the residual's plotting rank
};

struct ResidualReport {
  std::vector<ResidualRow> rows;  // input order, tail pairs only
  double threshold_u = 0.0;
  double ks_statistic = 0.0;
  double ks_pvalue = 0.0;
};

// Quantile residuals of the tail pairs (x + y > threshold_u): the fitted
// conditional CDF value pushed through the standard normal quantile. Under a
// correct model the residuals are approximately standard normal.
ResidualReport quantile_residuals(const std::vector<FrechetPair>& pairs,
                                  const ConditionalCdf& cdf, double threshold_u);

// Same report with the conditional CDF averaged over thinned chain states.
ResidualReport posterior_quantile_residuals(const std::vector<FrechetPair>& pairs,
                                            const McmcChain& chain);

// Kolmogorov-Smirnov distance between the sample and the standard normal.
double ks_statistic_normal(std::vector<double> residuals);

// Asymptotic Kolmogorov p-value with the small-sample correction factor
// sqrt(n) + 0.12 + 0.11 / sqrt(n).
double kolmogorov_pvalue(double d, std::size_t n);

void write_residuals_csv(const std::filesystem::path& path,
                         const ResidualReport& report);

}  // namespace evreg
