#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "evreg/ev_models.hpp"
#include "evreg/root_finding.hpp"

namespace evreg {

// Conditional CDF of the response given one covariate: cdf(y, x).
using ConditionalCdf = std::function<double(double, double)>;

// Family of conditional-quantile curves y_{q|x} over a covariate grid.
// values is q-major: values[iq * x_grid.size() + ix]. lower/upper carry
// pointwise credible bands when present (same layout), else stay empty.
struct RegressionManifold {
  std::vector<double> q_levels;
  std::vector<double> x_grid;
  std::vector<double> values;
  std::vector<double> lower;
  std::vector<double> upper;
  double credible_level = 0.0;

  std::size_t cells() const { return q_levels.size() * x_grid.size(); }
  bool has_bands() const { return !lower.empty(); }
  double value(std::size_t iq, std::size_t ix) const {
    return values[iq * x_grid.size() + ix];
  }
};

// Smallest y with cdf(y, x) >= q, found by bracket growth plus Brent.
double conditional_quantile(const ConditionalCdf& cdf, double q, double x,
                            const CdfInversionConfig& cfg = {});

// Closed-form logistic conditional quantile through the Lambert W function.
// Throws std::runtime_error when the inner bracket degenerates numerically
// (alpha near 1 or extreme q); alpha must lie strictly in (0, 1).
double logistic_quantile_closed_form(double alpha, double q, double x);

// Closed form when it holds, silently falling back to the numeric inverse.
// alpha = 1 is served by the independence quantile.
double logistic_quantile(double alpha, double q, double x);

struct LinearAsymptote {
  double beta_q = 0.0;   // slope, positive
  double gamma_q = 0.0;  // offset
};

// Large-x tangent y_{q|x} ~ beta_q x + gamma_q of the logistic quantile.
LinearAsymptote logistic_linear_asymptote(double alpha, double q);

RegressionManifold manifold_grid(const ConditionalCdf& cdf,
                                 std::span<const double> q_levels,
                                 std::span<const double> x_grid);

// Manifold of a parametric model; the logistic family uses the closed form.
RegressionManifold model_manifold(const EvModel& model,
                                  std::span<const double> q_levels,
                                  std::span<const double> x_grid);

std::vector<double> default_q_levels();  // 0.1, 0.2, ..., 0.9
std::vector<double> default_x_grid();    // 100 log-spaced points in (0, 20]

void write_manifold_csv(const std::filesystem::path& path, const RegressionManifold& m);
RegressionManifold read_manifold_csv(const std::filesystem::path& path);

nlohmann::json manifold_to_json(const RegressionManifold& m);
RegressionManifold manifold_from_json(const nlohmann::json& j);

}  // namespace evreg
