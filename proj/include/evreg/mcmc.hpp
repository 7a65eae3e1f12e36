#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evreg/angular_bernstein.hpp"
#include "evreg/manifold.hpp"

namespace evreg {

struct McmcConfig {
  int iterations = 10000;
  int burn_in = 4000;
  double prior_concentration = 0.1;  // symmetric Dirichlet on the weights
  int bernstein_order = 0;           // 0 picks the smallest order fitting k
  std::uint64_t seed = 1;
  double target_accept = 0.44;
  int adapt_window = 50;
  double initial_step = 1.0;
};

// Post burn-in draws of the free logits, with the bookkeeping needed to
// rebuild densities and to report mixing.
struct McmcChain {
  int J = 0;
  int d = 0;
  std::size_t k = 0;
  double threshold_u = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0;
  int burn_in = 0;
  std::vector<std::vector<double>> states;  // free logits, one per kept sweep
  std::vector<double> log_posterior_trace;  // aligned with states
  std::vector<double> acceptance;           // per coordinate, post burn-in
  std::vector<double> step_sizes;           // per coordinate, final
  std::vector<std::string> warnings;
};

// Smallest order J whose composition count C(J-1, d-1) reaches k.
int auto_bernstein_order(std::size_t k, int d);

// Reference log posterior of the free logits: angular log likelihood of the
// sample plus a symmetric Dirichlet log prior on the full weight vector plus
// the log Jacobian of the logit parametrization. -infinity outside the
// admissible region (a corner weight driven negative).
double log_posterior(std::span<const double> logits,
                     const PseudoAngleSample& sample, int J,
                     double concentration);

// Coordinate-at-a-time Gaussian random-walk Metropolis with step sizes
// adapted toward target_accept during burn-in (Robbins-Monro on log step,
// frozen afterwards). The variate stream per proposal is fixed, so a seed
// determines the chain byte for byte.
McmcChain run_chain(const PseudoAngleSample& sample, const McmcConfig& cfg);

// n / integrated autocorrelation time, truncated by Geyer's initial
// positive sequence rule. A constant series counts as one sample.
double effective_sample_size(std::span<const double> series);

// Weight-space average over all kept states; the linear constraints are
// preserved exactly by averaging.
BernsteinAngularDensity posterior_mean_density(const McmcChain& chain);

// Up to max_states evenly spaced posterior densities rebuilt from the chain.
std::vector<BernsteinAngularDensity> thinned_densities(const McmcChain& chain,
                                                       std::size_t max_states = 200);

// Pointwise posterior mean and central credible band of the conditional
// quantile curves over a covariate grid (d = 2 only). The chain is thinned
// to at most 200 evenly spaced states; cells are evaluated in parallel.
RegressionManifold posterior_manifold(const McmcChain& chain,
                                      std::span<const double> q_levels,
                                      std::span<const double> x_grid,
                                      double credible_level = 0.9,
                                      int n_threads = 0);

void write_chain_jsonl(const std::filesystem::path& path, const McmcChain& chain);
McmcChain read_chain_jsonl(const std::filesystem::path& path);

// Mixing report: per-coordinate acceptance, final steps, per-coordinate ESS,
// ESS of the log posterior trace, warnings.
nlohmann::json chain_summary_json(const McmcChain& chain);

}  // namespace evreg
