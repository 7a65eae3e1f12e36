#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace evreg {

// A composition alpha of J into d parts, every part >= 1.
using Composition = std::vector<int>;

// All compositions of J into d positive parts, ascending lexicographic.
// There are C(J-1, d-1) of them.
std::vector<Composition> enumerate_compositions(int J, int d);

// Thrown when the constraint solve pushes a corner weight negative.
struct InvalidWeights : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mixture of Dirichlet densities h(w) = sum_alpha pi_alpha dir(w; alpha) on
// the (d-1)-simplex, with weights constrained so that h integrates to one
// and the angular mean sits at the barycenter (1/d, ..., 1/d).
struct BernsteinAngularDensity {
  int J = 0;
  int d = 0;
  std::vector<Composition> compositions;  // ascending lexicographic
  std::vector<double> weights;            // aligned with compositions
};

// Indices of the d corner compositions inside the lexicographic list; the
// j-th corner has component j equal to J-d+1 and every other component 1.
std::vector<std::size_t> corner_positions(const std::vector<Composition>& comps,
                                          int J, int d);

// Maps one free logit per non-corner composition to the full weight vector
// through the generalized logistic transform; the d corner weights then
// solve the normalization and mean constraints exactly. Throws
// InvalidWeights when a corner weight comes out negative.
BernsteinAngularDensity weights_from_logits(std::span<const double> free_logits,
                                            int J, int d);

// Same map returning nullopt instead of throwing (MCMC hot path).
std::optional<BernsteinAngularDensity> try_weights_from_logits(
    std::span<const double> free_logits, int J, int d);

// h(w) for w on the simplex (componentwise >= 0, summing to 1 within 1e-8).
double density(const BernsteinAngularDensity& h, std::span<const double> w);

// Conditional CDF of the response given a single covariate (d = 2); exact
// for the Bernstein family via incomplete-beta partial sums.
double conditional_cdf_p1(const BernsteinAngularDensity& h, double y, double x);

struct ApproxCdfConfig {
  int initial_order = 64;
  int max_order = 1024;
  double rel_tol = 1e-8;
};

// Point-process approximation of the conditional CDF for p = d-1 covariates,
// a ratio of mixture integrals evaluated by Gauss-Legendre quadrature after
// the substitution t = s / (1 - s). The order doubles until the result is
// stable to rel_tol.
double conditional_cdf_approx(const BernsteinAngularDensity& h, double y,
                              std::span<const double> x,
                              const ApproxCdfConfig& cfg = {});

// Pseudo-polar decomposition of Frechet-scale rows above a radial threshold.
struct PseudoAngleSample {
  int d = 0;
  std::vector<std::vector<double>> angles;  // k rows on the simplex
  std::vector<double> radii;                // matching l1 radii, all > threshold_u
  double threshold_u = 0.0;
  double radial_quantile = 0.0;
  std::size_t k() const { return angles.size(); }
};

// Splits each row into l1 radius and angle, keeps rows with radius above the
// empirical radial quantile (order statistic at ceil(q n)), and requires at
// least d + 1 exceedances.
PseudoAngleSample decompose(const std::vector<std::vector<double>>& rows,
                            double radial_quantile = 0.95);

nlohmann::json density_to_json(const BernsteinAngularDensity& h);
BernsteinAngularDensity density_from_json(const nlohmann::json& j);

void write_angles_csv(const std::filesystem::path& path, const PseudoAngleSample& s);
PseudoAngleSample read_angles_csv(const std::filesystem::path& path);

}  // namespace evreg
