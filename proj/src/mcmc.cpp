#include "evreg/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "evreg/errors.hpp"
#include "evreg/random.hpp"
#include "evreg/special_functions.hpp"
#include "evreg/text_io.hpp"

namespace evreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double choose(int n, int r) {
  if (r < 0 || r > n) return 0.0;
  r = std::min(r, n - r);
  double c = 1.0;
  for (int i = 1; i <= r; ++i) c *= static_cast<double>(n - r + i) / i;
  return c;
}

// Incremental evaluation of the log posterior under single-coordinate logit
// moves. The sufficient statistics are the free-weight exponentials E, their
// sum, the per-coordinate composition sums A_j, the logit sum L, and the
// per-observation free mixture mass S_i; each is O(1) or O(k) to shift when
// one logit changes, so a proposal costs O(k d) instead of O(m k).
struct PosteriorEngine {
  int J = 0;
  int d = 0;
  std::size_t k = 0;
  std::size_t nf = 0;  // free coordinate count, m - d
  double concentration = 1.0;
  double prior_const = 0.0;  // log Gamma(m c) - m log Gamma(c)

  std::vector<double> fcomp;    // free compositions as doubles, [c * d + j]
  std::vector<double> dfree;    // dir(w_i; alpha_c), column-major [c * k + i]
  std::vector<double> dcorner;  // dir(w_i; corner_j), row-major [i * d + j]

  std::vector<double> logits;
  std::vector<double> E;   // exp(logits)
  double sumE = 0.0;
  double D = 0.0;          // d + sumE
  std::vector<double> A;   // sum_c fcomp[c][j] E[c]
  double L = 0.0;          // sum logits
  std::vector<double> S;   // per observation free mass, length k
  std::vector<double> pc;  // corner weights, length d
  double lp = kNegInf;

  std::vector<double> S_new, A_new, pc_new;  // proposal scratch

  void init(const PseudoAngleSample& sample, int order, double conc) {
    J = order;
    d = sample.d;
    k = sample.k();
    concentration = conc;

    const auto comps = enumerate_compositions(J, d);
    const std::size_t m = comps.size();
    if (m < static_cast<std::size_t>(d)) {
      throw std::invalid_argument("run_chain: bernstein order leaves fewer mixture components than corners");
    }
    const auto corners = corner_positions(comps, J, d);
    std::vector<bool> is_corner(m, false);
    for (const std::size_t c : corners) is_corner[c] = true;

    prior_const = log_gamma(m * concentration) - m * log_gamma(concentration);

    std::vector<double> lw(k * d);
    for (std::size_t i = 0; i < k; ++i) {
      for (int j = 0; j < d; ++j) {
        const double w = sample.angles[i][j];
        lw[i * d + j] = w > 0.0 ? std::log(w) : kNegInf;
      }
    }
    const double lgJ = log_gamma(J);
    auto dir_at = [&](const Composition& a, std::size_t i) {
      double lt = lgJ;
      for (int j = 0; j < d; ++j) {
        lt -= log_gamma(a[j]);
        if (a[j] > 1) lt += (a[j] - 1.0) * lw[i * d + j];
      }
      return std::isfinite(lt) ? std::exp(lt) : 0.0;
    };

    nf = m - d;
    fcomp.resize(nf * d);
    dfree.resize(nf * k);
    dcorner.resize(k * d);
    std::size_t c = 0;
    for (std::size_t a = 0; a < m; ++a) {
      if (is_corner[a]) continue;
      for (int j = 0; j < d; ++j) fcomp[c * d + j] = comps[a][j];
      for (std::size_t i = 0; i < k; ++i) dfree[c * k + i] = dir_at(comps[a], i);
      ++c;
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (int j = 0; j < d; ++j) dcorner[i * d + j] = dir_at(comps[corners[j]], i);
    }

    logits.assign(nf, 0.0);
    A.assign(d, 0.0);
    S.assign(k, 0.0);
    pc.assign(d, 0.0);
    S_new.assign(k, 0.0);
    A_new.assign(d, 0.0);
    pc_new.assign(d, 0.0);
    refresh();
    if (lp == kNegInf) {
      throw std::runtime_error("run_chain: initial state has zero posterior density");
    }
  }

  // Corner weights from the residual constraints; any negative entry marks
  // the state inadmissible.
  static bool corners_from(const std::vector<double>& A_in, double D_in, int J,
                           int d, std::vector<double>& out) {
    const double ratio = static_cast<double>(J) / d;
    const double inv = 1.0 / (J - d);
    for (int j = 0; j < d; ++j) {
      const double w = (ratio - (A_in[j] + d) / D_in) * inv;
      if (!(w >= 0.0)) return false;
      out[j] = w;
    }
    return true;
  }

  double full_lp(const std::vector<double>& S_in, double D_in, double L_in,
                 const std::vector<double>& pc_in) const {
    const double invD = 1.0 / D_in;
    double ll = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double hv = S_in[i] * invD;
      for (int j = 0; j < d; ++j) hv += pc_in[j] * dcorner[i * d + j];
      if (!(hv > 0.0)) return kNegInf;
      ll += std::log(hv);
    }
    double lpc = 0.0;
    for (int j = 0; j < d; ++j) {
      if (pc_in[j] <= 0.0) return kNegInf;
      lpc += std::log(pc_in[j]);
    }
    const double logD = std::log(D_in);
    const double free_log_mass = L_in - nf * logD;
    const double prior = prior_const + (concentration - 1.0) * (free_log_mass + lpc);
    const double jac = free_log_mass + std::log(static_cast<double>(d)) - logD;
    return ll + prior + jac;
  }

  // Rebuilds every cached statistic from the logits; run periodically to
  // keep incremental floating-point drift bounded.
  void refresh() {
    sumE = 0.0;
    L = 0.0;
    E.assign(nf, 0.0);
    std::fill(A.begin(), A.end(), 0.0);
    std::fill(S.begin(), S.end(), 0.0);
    for (std::size_t c = 0; c < nf; ++c) {
      const double e = std::exp(logits[c]);
      E[c] = e;
      sumE += e;
      L += logits[c];
      for (int j = 0; j < d; ++j) A[j] += fcomp[c * d + j] * e;
      const double* col = dfree.data() + c * k;
      for (std::size_t i = 0; i < k; ++i) S[i] += e * col[i];
    }
    D = d + sumE;
    if (!corners_from(A, D, J, d, pc)) {
      lp = kNegInf;
      return;
    }
    lp = full_lp(S, D, L, pc);
  }

  // Evaluates the posterior at logit[c] -> value; scratch buffers hold the
  // shifted statistics so an acceptance is a swap plus scalar copies.
  double propose(std::size_t c, double value) {
    const double En = std::exp(value);
    if (!std::isfinite(En)) return kNegInf;
    const double dE = En - E[c];
    const double Dn = d + (sumE + dE);
    for (int j = 0; j < d; ++j) A_new[j] = A[j] + fcomp[c * d + j] * dE;
    if (!corners_from(A_new, Dn, J, d, pc_new)) return kNegInf;
    const double* col = dfree.data() + c * k;
    for (std::size_t i = 0; i < k; ++i) S_new[i] = S[i] + dE * col[i];
    return full_lp(S_new, Dn, L + (value - logits[c]), pc_new);
  }

  void accept(std::size_t c, double value, double lp_new) {
    const double En = std::exp(value);
    const double dE = En - E[c];
    sumE += dE;
    D = d + sumE;
    L += value - logits[c];
    logits[c] = value;
    E[c] = En;
    std::swap(A, A_new);
    std::swap(pc, pc_new);
    std::swap(S, S_new);
    lp = lp_new;
  }
};

}  // namespace

int auto_bernstein_order(std::size_t k, int d) {
  if (d < 2) throw std::domain_error("auto_bernstein_order: d must be >= 2");
  if (k == 0) throw std::domain_error("auto_bernstein_order: empty sample");
  int J = d + 1;
  while (choose(J - 1, d - 1) < static_cast<double>(k)) ++J;
  return J;
}

double log_posterior(std::span<const double> logits,
                     const PseudoAngleSample& sample, int J,
                     double concentration) {
  if (!(concentration > 0.0)) {
    throw std::domain_error("log_posterior: concentration must be positive");
  }
  const int d = sample.d;
  const auto h = try_weights_from_logits(logits, J, d);
  if (!h) return kNegInf;
  // The Dirichlet prior lives on the open simplex; a corner weight clamped to
  // the face has zero posterior density, matching the sampler's own rule.
  for (const double w : h->weights) {
    if (w <= 0.0) return kNegInf;
  }

  double ll = 0.0;
  for (const auto& w : sample.angles) {
    const double hv = density(*h, w);
    if (!(hv > 0.0)) return kNegInf;
    ll += std::log(hv);
  }
  const std::vector<double> alpha(h->weights.size(), concentration);
  const double prior = dirichlet_log_density(h->weights, alpha);
  if (prior == kNegInf) return kNegInf;

  double den = static_cast<double>(d);
  double lsum = 0.0;
  for (const double l : logits) {
    den += std::exp(l);
    lsum += l;
  }
  const double logD = std::log(den);
  const double jac = lsum - static_cast<double>(logits.size()) * logD +
                     std::log(static_cast<double>(d)) - logD;
  return ll + prior + jac;
}

McmcChain run_chain(const PseudoAngleSample& sample, const McmcConfig& cfg) {
  if (cfg.iterations <= 0) throw std::invalid_argument("run_chain: iterations must be positive");
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations) {
    throw std::invalid_argument("run_chain: burn_in must lie in [0, iterations)");
  }
  if (!(cfg.prior_concentration > 0.0)) {
    throw std::invalid_argument("run_chain: prior concentration must be positive");
  }
  if (cfg.adapt_window <= 0) throw std::invalid_argument("run_chain: adapt_window must be positive");
  if (!(cfg.initial_step > 0.0)) throw std::invalid_argument("run_chain: initial_step must be positive");
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0)) {
    throw std::invalid_argument("run_chain: target_accept must lie in (0, 1)");
  }
  const int d = sample.d;
  if (d < 2) throw std::invalid_argument("run_chain: sample dimension must be >= 2");
  // k = 0 is allowed and samples the prior; an automatic order needs data.
  const int J = cfg.bernstein_order > 0 ? cfg.bernstein_order
                                        : auto_bernstein_order(sample.k(), d);

  PosteriorEngine eng;
  eng.init(sample, J, cfg.prior_concentration);
  const std::size_t nf = eng.nf;

  Rng rng(cfg.seed);
  std::vector<double> log_step(nf, std::log(cfg.initial_step));
  std::vector<double> step(nf, cfg.initial_step);
  std::vector<int> window_accepts(nf, 0);
  std::vector<long long> post_accepts(nf, 0);
  std::vector<bool> had_dead_window(nf, false);
  int window_index = 1;

  McmcChain chain;
  chain.J = J;
  chain.d = d;
  chain.k = sample.k();
  chain.threshold_u = sample.threshold_u;
  chain.seed = cfg.seed;
  chain.iterations = cfg.iterations;
  chain.burn_in = cfg.burn_in;
  chain.states.reserve(cfg.iterations - cfg.burn_in);
  chain.log_posterior_trace.reserve(cfg.iterations - cfg.burn_in);

  for (int sweep = 0; sweep < cfg.iterations; ++sweep) {
    const bool adapting = sweep < cfg.burn_in;
    for (std::size_t c = 0; c < nf; ++c) {
      // Both variates are consumed whatever happens, so the stream position
      // depends only on (seed, sweep, coordinate).
      const double xi = rng.normal();
      const double u = rng.uniform();
      const double value = eng.logits[c] + step[c] * xi;
      const double lp_new = eng.propose(c, value);
      if (std::log(u) < lp_new - eng.lp) {
        eng.accept(c, value, lp_new);
        if (adapting) ++window_accepts[c];
        else ++post_accepts[c];
      }
    }
    if (adapting && (sweep + 1) % cfg.adapt_window == 0) {
      const double delta = std::min(0.05, 1.0 / std::sqrt(static_cast<double>(window_index)));
      for (std::size_t c = 0; c < nf; ++c) {
        const double rate = static_cast<double>(window_accepts[c]) / cfg.adapt_window;
        log_step[c] += delta * (rate - cfg.target_accept);
        step[c] = std::exp(log_step[c]);
        if (window_accepts[c] == 0) had_dead_window[c] = true;
        window_accepts[c] = 0;
      }
      ++window_index;
    }
    if ((sweep + 1) % cfg.adapt_window == 0) eng.refresh();
    if (sweep >= cfg.burn_in) {
      chain.states.push_back(eng.logits);
      chain.log_posterior_trace.push_back(eng.lp);
    }
  }

  const double kept = static_cast<double>(cfg.iterations - cfg.burn_in);
  chain.acceptance.resize(nf);
  chain.step_sizes.resize(nf);
  for (std::size_t c = 0; c < nf; ++c) {
    chain.acceptance[c] = static_cast<double>(post_accepts[c]) / kept;
    chain.step_sizes[c] = step[c];
  }
  std::size_t dead = 0;
  for (std::size_t c = 0; c < nf; ++c) dead += had_dead_window[c] ? 1 : 0;
  if (dead > 0) {
    chain.warnings.push_back(std::to_string(dead) +
                             " coordinate(s) had a zero-acceptance adaptation window; "
                             "consider a smaller initial_step or longer burn_in");
  }
  return chain;
}

double effective_sample_size(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n == 0) return 0.0;
  if (n == 1) return 1.0;
  double mean = 0.0;
  for (const double x : series) mean += x;
  mean /= static_cast<double>(n);
  auto gamma_at = [&](std::size_t t) {
    double g = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) {
      g += (series[i] - mean) * (series[i + t] - mean);
    }
    return g / static_cast<double>(n);
  };
  const double g0 = gamma_at(0);
  if (!(g0 > 0.0)) return 1.0;

  // Sum of autocorrelations truncated at the first nonpositive even/odd pair.
  const std::size_t max_lag = std::min<std::size_t>(n - 1, 2000);
  double tau = 0.0;
  for (std::size_t t = 0; t <= max_lag; t += 2) {
    const double pair = gamma_at(t) / g0 +
                        (t + 1 <= max_lag ? gamma_at(t + 1) / g0 : 0.0);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau -= 1.0;
  tau = std::max(tau, 1.0);
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

BernsteinAngularDensity posterior_mean_density(const McmcChain& chain) {
  if (chain.states.empty()) {
    throw std::invalid_argument("posterior_mean_density: chain holds no states");
  }
  BernsteinAngularDensity mean =
      weights_from_logits(chain.states.front(), chain.J, chain.d);
  std::vector<double> acc(mean.weights.size(), 0.0);
  for (const auto& state : chain.states) {
    const auto h = weights_from_logits(state, chain.J, chain.d);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += h.weights[i];
  }
  const double inv = 1.0 / static_cast<double>(chain.states.size());
  for (std::size_t i = 0; i < acc.size(); ++i) mean.weights[i] = acc[i] * inv;
  return mean;
}

std::vector<BernsteinAngularDensity> thinned_densities(const McmcChain& chain,
                                                       std::size_t max_states) {
  if (chain.states.empty() || max_states == 0) {
    throw std::invalid_argument("thinned_densities: chain holds no states");
  }
  const std::size_t n_states = chain.states.size();
  const std::size_t n_take = std::min(max_states, n_states);
  std::vector<BernsteinAngularDensity> densities;
  densities.reserve(n_take);
  for (std::size_t s = 0; s < n_take; ++s) {
    const std::size_t idx = s * n_states / n_take;
    densities.push_back(weights_from_logits(chain.states[idx], chain.J, chain.d));
  }
  return densities;
}

RegressionManifold posterior_manifold(const McmcChain& chain,
                                      std::span<const double> q_levels,
                                      std::span<const double> x_grid,
                                      double credible_level, int n_threads) {
  if (chain.d != 2) {
    throw std::invalid_argument("posterior_manifold: requires d = 2 chains");
  }
  if (chain.states.empty()) {
    throw std::invalid_argument("posterior_manifold: chain holds no states");
  }
  if (!(credible_level > 0.0 && credible_level < 1.0)) {
    throw std::domain_error("posterior_manifold: credible level must lie in (0, 1)");
  }
  for (const double q : q_levels) {
    if (!(q > 0.0 && q < 1.0)) {
      throw std::domain_error("posterior_manifold: quantile levels must lie in (0, 1)");
    }
  }
  for (const double x : x_grid) {
    if (!(x > 0.0)) {
      throw std::domain_error("posterior_manifold: covariate grid must be positive");
    }
  }

  const std::vector<BernsteinAngularDensity> densities = thinned_densities(chain, 200);
  const std::size_t n_take = densities.size();

  RegressionManifold man;
  man.q_levels.assign(q_levels.begin(), q_levels.end());
  man.x_grid.assign(x_grid.begin(), x_grid.end());
  man.credible_level = credible_level;
  const std::size_t nq = man.q_levels.size();
  const std::size_t nx = man.x_grid.size();
  man.values.assign(nq * nx, 0.0);
  man.lower.assign(nq * nx, 0.0);
  man.upper.assign(nq * nx, 0.0);

  const std::size_t lo_rank = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.5 * (1.0 - credible_level) * n_take)));
  const std::size_t hi_rank = std::min<std::size_t>(
      n_take, static_cast<std::size_t>(std::ceil(0.5 * (1.0 + credible_level) * n_take)));

  auto run_cells = [&](std::size_t begin, std::size_t end) {
    std::vector<double> ys(n_take);
    for (std::size_t cell = begin; cell < end; ++cell) {
      const double q = man.q_levels[cell / nx];
      const double x = man.x_grid[cell % nx];
      double sum = 0.0;
      for (std::size_t s = 0; s < n_take; ++s) {
        const auto& den = densities[s];
        const double y = conditional_quantile(
            [&den](double yy, double xx) { return conditional_cdf_p1(den, yy, xx); },
            q, x);
        ys[s] = y;
        sum += y;
      }
      man.values[cell] = sum / static_cast<double>(n_take);
      std::sort(ys.begin(), ys.end());
      man.lower[cell] = ys[lo_rank - 1];
      man.upper[cell] = ys[hi_rank - 1];
    }
  };

  const std::size_t n_cells = nq * nx;
  std::size_t workers = n_threads > 0 ? static_cast<std::size_t>(n_threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_cells);
  if (workers <= 1) {
    run_cells(0, n_cells);
    return man;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    const std::size_t begin = t * n_cells / workers;
    const std::size_t end = (t + 1) * n_cells / workers;
    pool.emplace_back([&, t, begin, end] {
      try {
        run_cells(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return man;
}

void write_chain_jsonl(const std::filesystem::path& path, const McmcChain& chain) {
  std::ostringstream out;
  nlohmann::json meta;
  meta["type"] = "meta";
  meta["J"] = chain.J;
  meta["d"] = chain.d;
  meta["k"] = chain.k;
  meta["threshold_u"] = normalize12(chain.threshold_u);
  meta["seed"] = chain.seed;
  meta["iterations"] = chain.iterations;
  meta["burn_in"] = chain.burn_in;
  out << meta.dump() << '\n';
  for (std::size_t s = 0; s < chain.states.size(); ++s) {
    nlohmann::json rec;
    rec["type"] = "state";
    rec["index"] = s;
    rec["log_posterior"] = normalize12(chain.log_posterior_trace[s]);
    nlohmann::json logits = nlohmann::json::array();
    for (const double l : chain.states[s]) logits.push_back(normalize12(l));
    rec["logits"] = std::move(logits);
    out << rec.dump() << '\n';
  }
  atomic_write_text(path, out.str());
}

McmcChain read_chain_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  McmcChain chain;
  bool have_meta = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      const std::string type = rec.at("type").get<std::string>();
      if (type == "meta") {
        chain.J = rec.at("J").get<int>();
        chain.d = rec.at("d").get<int>();
        chain.k = rec.at("k").get<std::size_t>();
        chain.threshold_u = rec.at("threshold_u").get<double>();
        chain.seed = rec.at("seed").get<std::uint64_t>();
        chain.iterations = rec.at("iterations").get<int>();
        chain.burn_in = rec.at("burn_in").get<int>();
        have_meta = true;
      } else if (type == "state") {
        chain.states.push_back(rec.at("logits").get<std::vector<double>>());
        chain.log_posterior_trace.push_back(rec.at("log_posterior").get<double>());
      } else {
        throw DataError("chain jsonl: unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("chain jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_meta) throw DataError("chain jsonl: missing meta record in " + path.string());
  return chain;
}

nlohmann::json chain_summary_json(const McmcChain& chain) {
  nlohmann::json j;
  j["J"] = chain.J;
  j["d"] = chain.d;
  j["k"] = chain.k;
  j["threshold_u"] = normalize12(chain.threshold_u);
  j["seed"] = chain.seed;
  j["iterations"] = chain.iterations;
  j["burn_in"] = chain.burn_in;
  j["stored_states"] = chain.states.size();

  nlohmann::json acc = nlohmann::json::array();
  for (const double a : chain.acceptance) acc.push_back(normalize12(a));
  j["acceptance"] = std::move(acc);
  nlohmann::json steps = nlohmann::json::array();
  for (const double s : chain.step_sizes) steps.push_back(normalize12(s));
  j["step_sizes"] = std::move(steps);

  const std::size_t nf = chain.states.empty() ? 0 : chain.states.front().size();
  nlohmann::json ess = nlohmann::json::array();
  std::vector<double> trace(chain.states.size());
  for (std::size_t c = 0; c < nf; ++c) {
    for (std::size_t s = 0; s < chain.states.size(); ++s) trace[s] = chain.states[s][c];
    ess.push_back(normalize12(effective_sample_size(trace)));
  }
  j["ess"] = std::move(ess);
  j["ess_log_post"] = normalize12(effective_sample_size(chain.log_posterior_trace));

  nlohmann::json warn = nlohmann::json::array();
  for (const auto& w : chain.warnings) warn.push_back(w);
  j["warnings"] = std::move(warn);
  return j;
}

}  // namespace evreg
