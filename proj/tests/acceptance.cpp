// Release gate: eleven checks, one line of output each. Exit status is the
// number of failed criteria, so a clean run exits zero.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "evreg/angular_bernstein.hpp"
#include "evreg/data_pipeline.hpp"
#include "evreg/diagnostics.hpp"
#include "evreg/ev_models.hpp"
#include "evreg/manifold.hpp"
#include "evreg/mcmc.hpp"
#include "evreg/random.hpp"
#include "evreg/special_functions.hpp"
#include "test_support.hpp"

using namespace evreg;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> geometric_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  const double r = std::log(hi / lo) / (n - 1);
  for (int i = 0; i < n; ++i) g[i] = lo * std::exp(r * i);
  return g;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

BernsteinAngularDensity random_density(int J, int d, Rng& rng) {
  const std::size_t m = enumerate_compositions(J, d).size();
  for (int attempt = 0; attempt < 500; ++attempt) {
    std::vector<double> logits(m - d);
    for (double& l : logits) l = 0.8 * rng.normal();
    const auto h = try_weights_from_logits(logits, J, d);
    if (h) return *h;
  }
  throw std::runtime_error("no valid density found");
}

PseudoAngleSample synthetic_sample(std::size_t k, std::uint64_t seed) {
  PseudoAngleSample s;
  s.d = 2;
  s.threshold_u = 1.0;
  s.radial_quantile = 0.9;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const double w = 0.05 + 0.9 * rng.uniform();
    s.angles.push_back({w, 1.0 - w});
    s.radii.push_back(1.0 + rng.uniform());
  }
  return s;
}

// Scenario presets shared with the command line driver.
const std::vector<EvModel> kScenarios{HuslerReiss{0.1}, Logistic{0.9},
                                      ColesTawn{0.5, 100.0}};

struct Gate {
  int failures = 0;

  void run(int id, const std::string& label,
           const std::function<bool(std::string&)>& body) {
    const auto t0 = Clock::now();
    bool ok = false;
    std::string detail;
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] criterion %d: %s (%s%s%.1f s)\n", ok ? "PASS" : "FAIL",
                id, label.c_str(), detail.c_str(), detail.empty() ? "" : "; ",
                seconds_since(t0));
    std::fflush(stdout);
  }
};

// Simple table reader for the prediction CSV: keeps the named columns as
// parallel vectors, rows in file order.
struct PredictTable {
  std::vector<double> q, x, y;
};

PredictTable read_predict_csv(const std::string& path) {
  std::istringstream in(testsupport::slurp(path));
  std::string line;
  if (!std::getline(in, line) || line.find("q,x,") != 0) {
    throw std::runtime_error("unexpected prediction header: " + line);
  }
  PredictTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
    if (vals.size() < 5) throw std::runtime_error("short prediction row: " + line);
    t.q.push_back(vals[0]);
    t.x.push_back(vals[1]);
    t.y.push_back(vals[4]);
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") setenv("EVREG_CLI", argv[i + 1], 1);
    else if (flag == "--fixtures") setenv("EVREG_FIXTURES", argv[i + 1], 1);
  }

  Gate gate;

  gate.run(1, "lambert-w round trip on 1e4 log-spaced points", [](std::string& d) {
    const auto t0 = Clock::now();
    const int n = 10000;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = std::pow(10.0, -6.0 + 12.0 * i / (n - 1.0));
      const double w = lambert_w0(z);
      worst = std::max(worst, std::fabs(w * std::exp(w) - z) / std::max(1.0, z));
    }
    const double dt = seconds_since(t0);
    d = "max residual " + fmt(worst);
    return worst <= 1e-12 && dt < 1.0;
  });

  gate.run(2, "logistic closed form vs numeric inversion", [](std::string& d) {
    const auto t0 = Clock::now();
    Rng rng(424242);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double alpha = 0.05 + 0.9 * rng.uniform();
      const double q = 0.05 + 0.9 * rng.uniform();
      const double x = 0.1 + 49.9 * rng.uniform();
      const double closed = logistic_quantile(alpha, q, x);
      const EvModel m = Logistic{alpha};
      const double inverted = conditional_quantile(
          [&m](double yy, double xx) { return conditional_cdf(m, yy, xx); }, q, x);
      worst = std::max(worst, std::fabs(closed - inverted) / inverted);
    }
    const double dt = seconds_since(t0);
    d = "max rel gap " + fmt(worst);
    return worst <= 1e-6 && dt < 10.0;
  });

  gate.run(3, "logistic linear tangent at x=100 across the (alpha, q) grid",
           [](std::string& d) {
    int tangent_fail = 0, offset_fail = 0;
    std::string bad;
    for (const double alpha : {0.1, 0.4, 0.6, 0.9}) {
      for (const double q : {0.1, 0.5, 0.9}) {
        const LinearAsymptote a = logistic_linear_asymptote(alpha, q);
        const double y100 = logistic_quantile(alpha, q, 100.0);
        if (std::fabs(y100 - (a.beta_q * 100.0 + a.gamma_q)) > 0.01 * y100) {
          ++tangent_fail;
          bad += (bad.empty() ? "" : " ") + std::string("(") + fmt(alpha) + "," + fmt(q) + ")";
        }
        // Offset oracle: Richardson limit of y(x) - slope x with base points
        // past the knee gamma/beta, where the 1/x residual law holds.
        const double knee = std::max(1.0, a.gamma_q / a.beta_q);
        const double x1 = 300.0 * knee, x2 = 10.0 * x1;
        const double g1 = logistic_quantile(alpha, q, x1) - a.beta_q * x1;
        const double g2 = logistic_quantile(alpha, q, x2) - a.beta_q * x2;
        const double extrap = g2 + (g2 - g1) / 9.0;
        if (std::fabs(extrap - a.gamma_q) > 1e-3 * std::max(1.0, std::fabs(a.gamma_q))) {
          ++offset_fail;
        }
      }
    }
    d = "offset limit oracle ok on " + std::to_string(12 - offset_fail) +
        "/12; 1% tangent at x=100 holds on " + std::to_string(12 - tangent_fail) +
        "/12";
    if (tangent_fail > 0) {
      d += ", fails at " + bad +
           " where the tangent regime starts at x >> gamma_q/beta_q ~ "
           "q^(-1/(1-alpha)); the tangent is exact in the x->infinity limit "
           "(offset oracle) but no implementation can meet 1% at x=100 there";
    }
    return tangent_fail == 0 && offset_fail == 0;
  });

  gate.run(4, "conditional cdf equals d(joint)/dx over the frechet density",
           [](std::string& d) {
    double worst = 0.0;
    const auto xs = geometric_grid(0.25, 20.0, 20);
    const auto ys = geometric_grid(0.25, 20.0, 20);
    for (const auto& model : kScenarios) {
      for (const double x : xs) {
        for (const double y : ys) {
          const double h = 1e-4 * x;
          const double fd =
              (joint_cdf(model, x + h, y) - joint_cdf(model, x - h, y)) / (2.0 * h);
          const double marginal = std::exp(-1.0 / x) / (x * x);
          const double err = std::fabs(fd / marginal - conditional_cdf(model, y, x));
          worst = std::max(worst, err);
        }
      }
    }
    d = "max abs gap " + fmt(worst) + " over 3 models x 400 cells";
    return worst <= 2e-4;
  });

  gate.run(5, "quantile grids rise in both level and covariate", [](std::string& d) {
    double worst = 0.0;
    for (const auto& model : kScenarios) {
      const RegressionManifold m =
          model_manifold(model, default_q_levels(), default_x_grid());
      const std::size_t nq = m.q_levels.size(), nx = m.x_grid.size();
      for (std::size_t iq = 0; iq < nq; ++iq) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
          if (iq + 1 < nq) {
            worst = std::max(worst, m.value(iq, ix) - m.value(iq + 1, ix));
          }
          if (ix + 1 < nx) {
            worst = std::max(worst, m.value(iq, ix) - m.value(iq, ix + 1));
          }
        }
      }
    }
    d = "largest violation " + fmt(worst);
    return worst <= 1e-9;
  });

  gate.run(6, "bernstein weight constraints on 1000 valid draws per shape",
           [](std::string& d) {
    Rng rng(606);
    double worst = 0.0;
    for (const auto& [J, dd] : std::vector<std::pair<int, int>>{{5, 2}, {10, 2}, {6, 3}}) {
      const std::size_t m = enumerate_compositions(J, dd).size();
      const auto comps = enumerate_compositions(J, dd);
      int kept = 0;
      long attempts = 0;
      while (kept < 1000 && ++attempts < 2000000) {
        std::vector<double> logits(m - dd);
        for (double& l : logits) l = 1.5 * rng.normal();
        const auto h = try_weights_from_logits(logits, J, dd);
        if (!h) continue;
        ++kept;
        double sum = 0.0;
        std::vector<double> mean(dd, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          sum += h->weights[i];
          for (int j = 0; j < dd; ++j) mean[j] += comps[i][j] * h->weights[i];
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
        for (int j = 0; j < dd; ++j) {
          worst = std::max(worst, std::fabs(mean[j] - static_cast<double>(J) / dd));
        }
      }
      if (kept < 1000) {
        d = "only " + std::to_string(kept) + " valid draws at J=" + std::to_string(J);
        return false;
      }
    }
    d = "worst constraint residual " + fmt(worst);
    return worst <= 1e-10;
  });

  gate.run(7, "p=1 conditional cdf equals angular-measure quadrature",
           [](std::string& d) {
    Rng rng(707);
    double worst = 0.0;
    const auto xs = geometric_grid(0.2, 20.0, 20);
    const auto ys = geometric_grid(0.2, 20.0, 20);
    for (int rep = 0; rep < 10; ++rep) {
      const int J = 3 + static_cast<int>(rng.uniform() * 10.0);
      const auto h = random_density(J, 2, rng);
      const auto hw = [&](double w) {
        const std::vector<double> p{w, 1.0 - w};
        return density(h, p);
      };
      for (const double x : xs) {
        for (const double y : ys) {
          const double om = x / (x + y);
          const double s1 = testsupport::adaptive_simpson(
              [&](double w) { return w * hw(w); }, om, 1.0, 1e-12);
          const double s2 = testsupport::adaptive_simpson(
              [&](double w) { return (1.0 - w) * hw(w); }, 0.0, om, 1e-12);
          const double oracle =
              2.0 * s1 * std::exp(-2.0 * (s1 / x + s2 / y) + 1.0 / x);
          worst = std::max(worst, std::fabs(conditional_cdf_p1(h, y, x) - oracle));
        }
      }
    }
    d = "max abs gap " + fmt(worst) + " over 10 densities x 400 cells";
    return worst <= 1e-6;
  });

  gate.run(8, "soft-maximum cdf converges to the dependence indicator",
           [](std::string& d) {
    const std::vector<double> xs{1.3, 2.7};
    Rng rng(808);
    int points = 0;
    bool monotone = true;
    double final_worst = 0.0;
    while (points < 20) {
      const double y = 0.2 + 3.3 * rng.uniform();
      if (std::fabs(y - xs[0]) < 0.15) continue;  // off the jump at min x
      ++points;
      const double target = y > xs[0] ? 1.0 : 0.0;
      double prev = 2.0;
      for (const double N : {50.0, 100.0, 200.0, 400.0}) {
        const double err = std::fabs(softmax_conditional_cdf(y, xs, N) - target);
        if (err > prev + 1e-12) monotone = false;
        prev = err;
      }
      final_worst = std::max(final_worst, prev);
    }
    d = "monotone over N in {50,100,200,400} at 20 points, final error <= " +
        fmt(final_worst);
    return monotone;
  });

  gate.run(9, "posterior sampling: rejection oracle and scenario recovery",
           [](std::string& d) {
    // Desk-scale exactness: a two-logit posterior against iid draws obtained
    // by rejection from a uniform box with a verified envelope.
    const auto t0 = Clock::now();
    const auto data = synthetic_sample(20, 101);
    const int J = 5;
    const double c = 1.0;
    const auto lp = [&](double l1, double l2) {
      return log_posterior(std::vector<double>{l1, l2}, data, J, c);
    };
    const double lo = -10.0, hi = 6.0;
    double grid_max = -1e300;
    for (int i = 0; i < 61; ++i) {
      for (int j = 0; j < 61; ++j) {
        grid_max = std::max(grid_max, lp(lo + (hi - lo) * i / 60.0,
                                         lo + (hi - lo) * j / 60.0));
      }
    }
    const double log_envelope = grid_max + std::log(4.0);
    Rng rng(202);
    std::vector<std::vector<double>> accepted;
    long proposals = 0;
    while (accepted.size() < 8000 && proposals < 3000000) {
      ++proposals;
      const double l1 = lo + (hi - lo) * rng.uniform();
      const double l2 = lo + (hi - lo) * rng.uniform();
      const double v = lp(l1, l2);
      if (v > log_envelope) {
        d = "rejection envelope violated";
        return false;
      }
      if (std::log(rng.uniform()) < v - log_envelope) accepted.push_back({l1, l2});
    }
    if (accepted.size() < 4000) {
      d = "rejection sampler starved";
      return false;
    }
    McmcConfig cfg;
    cfg.iterations = 60000;
    cfg.burn_in = 10000;
    cfg.prior_concentration = c;
    cfg.bernstein_order = J;
    cfg.seed = 7;
    const McmcChain chain = run_chain(data, cfg);
    double worst_ks = 0.0;
    for (std::size_t coord = 0; coord < 4; ++coord) {
      std::vector<double> iid, mc;
      iid.reserve(accepted.size());
      mc.reserve(chain.states.size());
      for (const auto& l : accepted) {
        iid.push_back(weights_from_logits(l, J, 2).weights[coord]);
      }
      for (const auto& st : chain.states) {
        mc.push_back(weights_from_logits(st, J, 2).weights[coord]);
      }
      worst_ks = std::max(worst_ks, testsupport::ks_two_sample(mc, iid));
    }
    const double desk_dt = seconds_since(t0);
    if (worst_ks >= 0.05 || desk_dt >= 120.0) {
      d = "chain-vs-rejection ks " + fmt(worst_ks) + " in " + fmt(desk_dt) + " s";
      return false;
    }

    // Scenario-scale recovery: n=5000 draws, k=250 exceedances, automatic
    // order, 10k sweeps; the posterior mean median-quantile line must track
    // the true one over x in (0, 20].
    const auto t1 = Clock::now();
    const std::vector<double> tol{0.15, 0.25, 0.15};
    const auto xs = geometric_grid(0.05, 20.0, 25);
    const std::vector<double> q50{0.5};
    std::string recov;
    for (std::size_t s = 0; s < kScenarios.size(); ++s) {
      const auto pairs = sample(kScenarios[s], 5000, 4001 + s);
      std::vector<std::vector<double>> rows;
      rows.reserve(pairs.size());
      for (const auto& p : pairs) rows.push_back({p.x, p.y});
      const PseudoAngleSample angles = decompose(rows, 0.95);
      McmcConfig sc;
      sc.iterations = 10000;
      sc.burn_in = 4000;
      sc.seed = 21 + s;
      const McmcChain chain_s = run_chain(angles, sc);
      const RegressionManifold post = posterior_manifold(chain_s, q50, xs, 0.9, 0);
      const RegressionManifold truth = model_manifold(kScenarios[s], q50, xs);
      std::vector<double> rel(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        rel[i] = std::fabs(post.values[i] - truth.values[i]) / truth.values[i];
      }
      const double med = median(rel);
      recov += (recov.empty() ? "" : "/") + fmt(med);
      if (med >= tol[s]) {
        d = "scenario " + std::to_string(s + 1) + " median rel err " + fmt(med) +
            " over tol " + fmt(tol[s]);
        return false;
      }
    }
    const double dt = seconds_since(t1);
    d = "ks " + fmt(worst_ks) + " on 50k draws; scenario median rel errs " +
        recov + " in " + fmt(dt) + " s";
    return dt < 900.0;
  });

  gate.run(10, "pipeline on fixtures, monotone predictions, residual normality",
           [](std::string& d) {
    namespace ts = testsupport;
    ts::TempDir dir("accept10");
    const std::string fx = ts::fixtures_dir();
    auto r1 = ts::run_cli("transform --prices-x " + fx + "/prices_a.csv" +
                              " --prices-y " + fx + "/prices_b.csv" +
                              " --out " + dir.file("pairs.csv") +
                              " --record " + dir.file("record.json"),
                          dir, "t.log");
    if (r1.exit_code != 0) {
      d = "transform exited " + std::to_string(r1.exit_code);
      return false;
    }
    auto r2 = ts::run_cli("fit --pairs " + dir.file("pairs.csv") + " --out " +
                              dir.file("fit") +
                              " --iterations 3000 --burn-in 1200 --seed 5",
                          dir, "f.log");
    if (r2.exit_code != 0) {
      d = "fit exited " + std::to_string(r2.exit_code);
      return false;
    }
    auto r3 = ts::run_cli("predict --fit " + dir.file("fit") + " --record " +
                              dir.file("record.json") +
                              " --x 0.01,0.02,0.03 --q-levels 0.75,0.9,0.95" +
                              " --threads 2 --out " + dir.file("pred.csv"),
                          dir, "p.log");
    if (r3.exit_code != 0) {
      d = "predict exited " + std::to_string(r3.exit_code);
      return false;
    }
    const PredictTable t = read_predict_csv(dir.file("pred.csv"));
    if (t.q.size() != 9) {
      d = "expected 9 prediction rows, got " + std::to_string(t.q.size());
      return false;
    }
    for (std::size_t a = 0; a < t.q.size(); ++a) {
      for (std::size_t b = 0; b < t.q.size(); ++b) {
        const bool same_x = std::fabs(t.x[a] - t.x[b]) < 1e-12;
        const bool same_q = std::fabs(t.q[a] - t.q[b]) < 1e-12;
        if (same_x && t.q[a] < t.q[b] && t.y[a] > t.y[b]) {
          d = "prediction not monotone in q";
          return false;
        }
        if (same_q && t.x[a] < t.x[b] && t.y[a] > t.y[b]) {
          d = "prediction not monotone in x";
          return false;
        }
      }
    }

    // Residual calibration: a correctly specified model on its own draws
    // passes the 1% normality test on at least 95 of 100 seeds.
    const EvModel m = Logistic{0.1};
    const ConditionalCdf cdf = [&m](double yy, double xx) {
      return conditional_cdf(m, yy, xx);
    };
    int passed = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto pairs = sample(m, 1000, seed);
      const ResidualReport rep = quantile_residuals(pairs, cdf, 0.0);
      if (rep.ks_pvalue > 0.01) ++passed;
    }
    d = "pipeline ok; residual normality passed on " + std::to_string(passed) +
        "/100 seeds";
    return passed >= 95;
  });

  gate.run(11, "byte-identical reruns of every cli command", [](std::string& d) {
    namespace ts = testsupport;
    ts::TempDir dir("accept11");
    const std::string fx = ts::fixtures_dir();

    const auto rerun_same = [&](const std::string& args,
                                const std::vector<std::string>& files,
                                const std::string& tag) {
      const auto a = ts::run_cli(args, dir, tag + "_a.log");
      std::vector<std::string> snap;
      snap.reserve(files.size());
      for (const auto& f : files) snap.push_back(ts::slurp(f));
      const auto b = ts::run_cli(args, dir, tag + "_b.log");
      if (a.exit_code != 0 || b.exit_code != 0) return std::string("exit codes");
      if (a.out != b.out) return std::string("stdout differs");
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (ts::slurp(files[i]) != snap[i]) return std::string("file differs: ") + files[i];
      }
      return std::string();
    };

    std::vector<std::pair<std::string, std::string>> checks;
    checks.emplace_back("simulate",
                        rerun_same("simulate --scenario 2 --n 400 --seed 77 --out " +
                                       dir.file("sim.csv"),
                                   {dir.file("sim.csv")}, "sim"));
    checks.emplace_back(
        "transform",
        rerun_same("transform --prices-x " + fx + "/prices_a.csv --prices-y " + fx +
                       "/prices_b.csv --out " + dir.file("pairs.csv") + " --record " +
                       dir.file("record.json"),
                   {dir.file("pairs.csv"), dir.file("record.json")}, "tr"));
    const std::string fitdir = dir.file("fit");
    checks.emplace_back(
        "fit", rerun_same("fit --pairs " + dir.file("pairs.csv") + " --out " + fitdir +
                              " --iterations 800 --burn-in 400 --seed 3",
                          {fitdir + "/chain.jsonl", fitdir + "/density.json",
                           fitdir + "/angles.csv", fitdir + "/summary.json"},
                          "fit"));
    checks.emplace_back(
        "manifold",
        rerun_same("manifold --fit " + fitdir +
                       " --q-levels 0.25,0.5,0.75 --x-min 0.1 --x-max 10 --x-count 12"
                       " --threads 2 --out " + dir.file("man.csv"),
                   {dir.file("man.csv")}, "man"));
    checks.emplace_back(
        "predict",
        rerun_same("predict --fit " + fitdir + " --record " + dir.file("record.json") +
                       " --x 0.01,0.02 --q-levels 0.8,0.95 --threads 2 --out " +
                       dir.file("pred.csv"),
                   {dir.file("pred.csv")}, "pred"));
    checks.emplace_back(
        "residuals",
        rerun_same("residuals --pairs " + dir.file("pairs.csv") + " --fit " + fitdir +
                       " --out " + dir.file("res.csv"),
                   {dir.file("res.csv")}, "res"));

    std::string bad;
    for (const auto& [name, err] : checks) {
      if (!err.empty()) bad += (bad.empty() ? "" : ", ") + name + ": " + err;
    }
    d = bad.empty() ? "6 commands, stdout and outputs stable" : bad;
    return bad.empty();
  });

  std::printf("%d of 11 criteria failed\n", gate.failures);
  return gate.failures;
}
