#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evreg/angular_bernstein.hpp"
#include "evreg/data_pipeline.hpp"
#include "evreg/diagnostics.hpp"
#include "evreg/errors.hpp"
#include "evreg/ev_models.hpp"
#include "evreg/manifold.hpp"
#include "evreg/mcmc.hpp"
#include "evreg/text_io.hpp"

namespace {

using nlohmann::json;

// Usage and configuration problems exit with code 2; DataError with 3; any
// other failure with 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const std::string& f : evreg::split_csv(s)) {
    try {
      out.push_back(evreg::parse_double(f));
    } catch (const evreg::DataError&) {
      throw ConfigError("bad numeric list entry '" + f + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty numeric list");
  return out;
}

std::vector<double> list_from_json(const json& v) {
  if (v.is_string()) return parse_list(v.get<std::string>());
  return v.get<std::vector<double>>();
}

using Binding = std::pair<const char*, std::function<void(const json&)>>;

// Values from --config fill in options the command line left untouched;
// explicit flags always win. Unknown keys are rejected.
void merge_config(CLI::App* sub, const std::string& cfg_path,
                  std::initializer_list<Binding> binds) {
  if (cfg_path.empty()) return;
  std::string text;
  try {
    text = evreg::read_text_file(cfg_path);
  } catch (const evreg::DataError& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config " + cfg_path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config " + cfg_path + ": top level must be an object");
  for (const auto& [key, value] : doc.items()) {
    const Binding* hit = nullptr;
    for (const auto& b : binds) {
      if (key == b.first) {
        hit = &b;
        break;
      }
    }
    if (!hit) throw ConfigError("config: unknown key '" + key + "'");
    const CLI::Option* op = sub->get_option_no_throw("--" + key);
    if (op && op->count() > 0) continue;
    try {
      hit->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

void print_config(bool enabled, const json& resolved) {
  if (enabled) std::cout << resolved.dump(2) << '\n';
}

struct ModelOpts {
  std::string name;
  double alpha = std::nan("");
  double lambda = std::nan("");
  double beta = std::nan("");
  int scenario = 0;
};

void add_model_options(CLI::App* sub, ModelOpts& m, bool with_scenario) {
  sub->add_option("--model", m.name, "logistic | husler-reiss | coles-tawn");
  sub->add_option("--alpha", m.alpha, "logistic or coles-tawn alpha");
  sub->add_option("--lambda", m.lambda, "husler-reiss lambda");
  sub->add_option("--beta", m.beta, "coles-tawn beta");
  if (with_scenario) {
    sub->add_option("--scenario", m.scenario, "preset 1, 2, or 3 instead of --model");
  }
}

bool model_given(const ModelOpts& m) {
  return !m.name.empty() || !std::isnan(m.alpha) || !std::isnan(m.lambda) ||
         !std::isnan(m.beta);
}

evreg::EvModel make_model(const ModelOpts& m) {
  if (m.scenario != 0) {
    if (model_given(m)) {
      throw ConfigError("--scenario and explicit model options are mutually exclusive");
    }
    switch (m.scenario) {
      case 1: return evreg::HuslerReiss{0.1};
      case 2: return evreg::Logistic{0.9};
      case 3: return evreg::ColesTawn{0.5, 100.0};
      default: throw ConfigError("--scenario must be 1, 2, or 3");
    }
  }
  evreg::EvModel model;
  if (m.name == "logistic") {
    if (std::isnan(m.alpha)) throw ConfigError("logistic needs --alpha");
    model = evreg::Logistic{m.alpha};
  } else if (m.name == "husler-reiss") {
    if (std::isnan(m.lambda)) throw ConfigError("husler-reiss needs --lambda");
    model = evreg::HuslerReiss{m.lambda};
  } else if (m.name == "coles-tawn") {
    if (std::isnan(m.alpha) || std::isnan(m.beta)) {
      throw ConfigError("coles-tawn needs --alpha and --beta");
    }
    model = evreg::ColesTawn{m.alpha, m.beta};
  } else if (m.name.empty()) {
    throw ConfigError("choose a model with --model or --scenario");
  } else {
    throw ConfigError("unknown model '" + m.name + "'");
  }
  try {
    evreg::validate(model);
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
  return model;
}

json model_config_json(const ModelOpts& m) {
  json j;
  j["scenario"] = m.scenario;
  j["model"] = m.name;
  if (!std::isnan(m.alpha)) j["alpha"] = m.alpha;
  if (!std::isnan(m.lambda)) j["lambda"] = m.lambda;
  if (!std::isnan(m.beta)) j["beta"] = m.beta;
  return j;
}

std::vector<double> geometric_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("grid needs 0 < x-min < x-max");
  if (count < 2) throw ConfigError("grid needs at least two points");
  std::vector<double> g(count);
  const double step = std::log(hi / lo) / (count - 1);
  for (int i = 0; i < count; ++i) g[i] = lo * std::exp(step * i);
  g.back() = hi;
  return g;
}

void check_levels(const std::vector<double>& q) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(q[i] > 0.0 && q[i] < 1.0)) throw ConfigError("quantile levels must lie in (0, 1)");
    if (i > 0 && q[i] <= q[i - 1]) throw ConfigError("quantile levels must be ascending");
  }
}

evreg::McmcChain load_chain(const std::string& fit_dir) {
  return evreg::read_chain_jsonl(std::filesystem::path(fit_dir) / "chain.jsonl");
}

// ---- subcommand handlers ----

struct SimulateOpts {
  ModelOpts model;
  std::size_t n = 5000;
  std::uint64_t seed = 1;
  std::string out;
  std::string config;
  bool show_config = false;
};

void run_simulate(CLI::App* sub, SimulateOpts& o) {
  merge_config(sub, o.config,
               {Binding{"n", [&](const json& v) { o.n = v.get<std::size_t>(); }},
                Binding{"seed", [&](const json& v) { o.seed = v.get<std::uint64_t>(); }},
                Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
                Binding{"model", [&](const json& v) { o.model.name = v.get<std::string>(); }},
                Binding{"alpha", [&](const json& v) { o.model.alpha = v.get<double>(); }},
                Binding{"lambda", [&](const json& v) { o.model.lambda = v.get<double>(); }},
                Binding{"beta", [&](const json& v) { o.model.beta = v.get<double>(); }},
                Binding{"scenario", [&](const json& v) { o.model.scenario = v.get<int>(); }}});
  if (o.out.empty()) throw ConfigError("simulate needs --out");
  if (o.n == 0) throw ConfigError("simulate needs --n >= 1");
  const evreg::EvModel model = make_model(o.model);

  json resolved = model_config_json(o.model);
  resolved["n"] = o.n;
  resolved["seed"] = o.seed;
  resolved["out"] = o.out;
  print_config(o.show_config, resolved);

  const auto pairs = evreg::sample(model, o.n, o.seed);
  evreg::write_pairs_csv(o.out, pairs);
  std::cout << "simulate: model=" << evreg::model_name(model) << " n=" << o.n
            << " seed=" << o.seed << " -> " << o.out << '\n';
}

struct TransformOpts {
  std::string prices_x, prices_y, out, record;
  std::string config;
  bool show_config = false;
};

void run_transform(CLI::App* sub, TransformOpts& o) {
  merge_config(sub, o.config,
               {Binding{"prices-x", [&](const json& v) { o.prices_x = v.get<std::string>(); }},
                Binding{"prices-y", [&](const json& v) { o.prices_y = v.get<std::string>(); }},
                Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
                Binding{"record", [&](const json& v) { o.record = v.get<std::string>(); }}});
  if (o.prices_x.empty() || o.prices_y.empty()) {
    throw ConfigError("transform needs --prices-x and --prices-y");
  }
  if (o.out.empty()) throw ConfigError("transform needs --out");
  if (o.record.empty()) {
    const std::filesystem::path p(o.out);
    o.record = (p.parent_path() / (p.stem().string() + "_record.json")).string();
  }
  json resolved{{"prices-x", o.prices_x},
                {"prices-y", o.prices_y},
                {"out", o.out},
                {"record", o.record}};
  print_config(o.show_config, resolved);

  const evreg::PriceSeries px = evreg::read_price_csv(o.prices_x);
  const evreg::PriceSeries py = evreg::read_price_csv(o.prices_y);
  const evreg::ReturnSeries rx = evreg::negative_log_returns(px);
  const evreg::ReturnSeries ry = evreg::negative_log_returns(py);
  const evreg::BlockMaxima bm = evreg::componentwise_block_maxima({rx, ry});

  const std::vector<double> zx = evreg::empirical_frechet_transform(bm.columns[0]);
  const std::vector<double> zy = evreg::empirical_frechet_transform(bm.columns[1]);
  std::vector<evreg::FrechetPair> pairs(zx.size());
  for (std::size_t i = 0; i < zx.size(); ++i) pairs[i] = {zx[i], zy[i]};
  evreg::write_pairs_csv(o.out, pairs);

  evreg::TransformRecord rec;
  rec.labels = bm.labels;
  rec.margin_x = evreg::EmpiricalMargin(bm.columns[0]);
  rec.margin_y = evreg::EmpiricalMargin(bm.columns[1]);
  rec.dropped_x = px.dropped_rows;
  rec.dropped_y = py.dropped_rows;
  evreg::atomic_write_text(o.record, evreg::transform_record_to_json(rec).dump(2) + "\n");

  std::cout << "transform: weeks=" << bm.labels.size() << " dropped_x=" << px.dropped_rows
            << " dropped_y=" << py.dropped_rows << " -> " << o.out << '\n';
}

struct FitOpts {
  std::string pairs, out;
  int iterations = 10000;
  int burn_in = 4000;
  double concentration = 0.1;
  int order = 0;
  std::uint64_t seed = 1;
  double radial_quantile = 0.95;
  double initial_step = 1.0;
  int adapt_window = 50;
  double target_accept = 0.44;
  std::string config;
  bool show_config = false;
};

void run_fit(CLI::App* sub, FitOpts& o) {
  merge_config(
      sub, o.config,
      {Binding{"pairs", [&](const json& v) { o.pairs = v.get<std::string>(); }},
       Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
       Binding{"iterations", [&](const json& v) { o.iterations = v.get<int>(); }},
       Binding{"burn-in", [&](const json& v) { o.burn_in = v.get<int>(); }},
       Binding{"concentration", [&](const json& v) { o.concentration = v.get<double>(); }},
       Binding{"order", [&](const json& v) { o.order = v.get<int>(); }},
       Binding{"seed", [&](const json& v) { o.seed = v.get<std::uint64_t>(); }},
       Binding{"radial-quantile", [&](const json& v) { o.radial_quantile = v.get<double>(); }},
       Binding{"initial-step", [&](const json& v) { o.initial_step = v.get<double>(); }},
       Binding{"adapt-window", [&](const json& v) { o.adapt_window = v.get<int>(); }},
       Binding{"target-accept", [&](const json& v) { o.target_accept = v.get<double>(); }}});
  if (o.pairs.empty()) throw ConfigError("fit needs --pairs");
  if (o.out.empty()) throw ConfigError("fit needs --out");
  if (o.iterations <= 0 || o.burn_in < 0 || o.burn_in >= o.iterations) {
    throw ConfigError("fit needs 0 <= burn-in < iterations");
  }
  if (!(o.concentration > 0.0)) throw ConfigError("fit needs --concentration > 0");
  if (!(o.radial_quantile > 0.0 && o.radial_quantile < 1.0)) {
    throw ConfigError("fit needs --radial-quantile in (0, 1)");
  }
  if (!(o.initial_step > 0.0)) throw ConfigError("fit needs --initial-step > 0");
  if (o.adapt_window <= 0) throw ConfigError("fit needs --adapt-window >= 1");
  if (!(o.target_accept > 0.0 && o.target_accept < 1.0)) {
    throw ConfigError("fit needs --target-accept in (0, 1)");
  }
  json resolved{{"pairs", o.pairs},
                {"out", o.out},
                {"iterations", o.iterations},
                {"burn-in", o.burn_in},
                {"concentration", o.concentration},
                {"order", o.order},
                {"seed", o.seed},
                {"radial-quantile", o.radial_quantile},
                {"initial-step", o.initial_step},
                {"adapt-window", o.adapt_window},
                {"target-accept", o.target_accept}};
  print_config(o.show_config, resolved);

  const auto pairs = evreg::read_pairs_csv(o.pairs);
  std::vector<std::vector<double>> rows(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) rows[i] = {pairs[i].x, pairs[i].y};
  const evreg::PseudoAngleSample sample = evreg::decompose(rows, o.radial_quantile);

  evreg::McmcConfig cfg;
  cfg.iterations = o.iterations;
  cfg.burn_in = o.burn_in;
  cfg.prior_concentration = o.concentration;
  cfg.bernstein_order = o.order;
  cfg.seed = o.seed;
  cfg.target_accept = o.target_accept;
  cfg.adapt_window = o.adapt_window;
  cfg.initial_step = o.initial_step;
  const evreg::McmcChain chain = evreg::run_chain(sample, cfg);

  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  evreg::write_angles_csv(dir / "angles.csv", sample);
  evreg::write_chain_jsonl(dir / "chain.jsonl", chain);
  json summary = evreg::chain_summary_json(chain);
  summary["config"] = resolved;
  evreg::atomic_write_text(dir / "summary.json", summary.dump(2) + "\n");
  evreg::atomic_write_text(dir / "density.json",
                           evreg::density_to_json(evreg::posterior_mean_density(chain)).dump(2) + "\n");

  double mean_acc = 0.0;
  for (const double a : chain.acceptance) mean_acc += a;
  if (!chain.acceptance.empty()) mean_acc /= static_cast<double>(chain.acceptance.size());
  std::cout << "fit: k=" << chain.k << " J=" << chain.J << " u=" << evreg::fmt12(chain.threshold_u)
            << " kept=" << chain.states.size() << " mean_accept=" << evreg::fmt12(mean_acc)
            << " -> " << o.out << '\n';
  for (const auto& w : chain.warnings) std::cerr << "warning: " << w << '\n';
}

struct ManifoldOpts {
  std::string fit_dir, out;
  ModelOpts model;
  std::string q_levels, x_grid;
  double x_min = 0.1, x_max = 20.0;
  int x_count = 100;
  double credible_level = 0.9;
  int threads = 0;
  std::string config;
  bool show_config = false;
};

void run_manifold(CLI::App* sub, ManifoldOpts& o) {
  merge_config(
      sub, o.config,
      {Binding{"fit", [&](const json& v) { o.fit_dir = v.get<std::string>(); }},
       Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
       Binding{"q-levels", [&](const json& v) { o.q_levels = v.is_string() ? v.get<std::string>() : v.dump(); }},
       Binding{"x-grid", [&](const json& v) { o.x_grid = v.is_string() ? v.get<std::string>() : v.dump(); }},
       Binding{"x-min", [&](const json& v) { o.x_min = v.get<double>(); }},
       Binding{"x-max", [&](const json& v) { o.x_max = v.get<double>(); }},
       Binding{"x-count", [&](const json& v) { o.x_count = v.get<int>(); }},
       Binding{"credible-level", [&](const json& v) { o.credible_level = v.get<double>(); }},
       Binding{"threads", [&](const json& v) { o.threads = v.get<int>(); }},
       Binding{"model", [&](const json& v) { o.model.name = v.get<std::string>(); }},
       Binding{"alpha", [&](const json& v) { o.model.alpha = v.get<double>(); }},
       Binding{"lambda", [&](const json& v) { o.model.lambda = v.get<double>(); }},
       Binding{"beta", [&](const json& v) { o.model.beta = v.get<double>(); }},
       Binding{"scenario", [&](const json& v) { o.model.scenario = v.get<int>(); }}});
  if (o.out.empty()) throw ConfigError("manifold needs --out");
  const bool from_fit = !o.fit_dir.empty();
  const bool from_model = o.model.scenario != 0 || model_given(o.model);
  if (from_fit == from_model) {
    throw ConfigError("manifold needs exactly one of --fit or a model");
  }
  std::vector<double> q = o.q_levels.empty() ? evreg::default_q_levels()
                                             : parse_list(o.q_levels);
  check_levels(q);
  std::vector<double> xg;
  if (!o.x_grid.empty()) {
    xg = parse_list(o.x_grid);
    for (std::size_t i = 0; i < xg.size(); ++i) {
      if (!(xg[i] > 0.0)) throw ConfigError("x grid must be positive");
      if (i > 0 && xg[i] <= xg[i - 1]) throw ConfigError("x grid must be ascending");
    }
  } else {
    xg = geometric_grid(o.x_min, o.x_max, o.x_count);
  }
  if (!(o.credible_level > 0.0 && o.credible_level < 1.0)) {
    throw ConfigError("credible level must lie in (0, 1)");
  }

  json resolved{{"out", o.out},
                {"q-levels", q},
                {"credible-level", o.credible_level},
                {"threads", o.threads}};
  if (from_fit) resolved["fit"] = o.fit_dir;
  if (from_model) resolved.update(model_config_json(o.model));
  if (!o.x_grid.empty()) {
    resolved["x-grid"] = xg;
  } else {
    resolved["x-min"] = o.x_min;
    resolved["x-max"] = o.x_max;
    resolved["x-count"] = o.x_count;
  }
  print_config(o.show_config, resolved);

  evreg::RegressionManifold man;
  if (from_fit) {
    const evreg::McmcChain chain = load_chain(o.fit_dir);
    man = evreg::posterior_manifold(chain, q, xg, o.credible_level, o.threads);
  } else {
    man = evreg::model_manifold(make_model(o.model), q, xg);
  }
  evreg::write_manifold_csv(o.out, man);
  std::cout << "manifold: levels=" << q.size() << " grid=" << xg.size()
            << (from_fit ? " bands=yes" : " bands=no") << " -> " << o.out << '\n';
}

struct PredictOpts {
  std::string fit_dir, record, xs, out;
  std::string q_levels;
  double credible_level = 0.9;
  int threads = 0;
  std::string config;
  bool show_config = false;
};

void run_predict(CLI::App* sub, PredictOpts& o) {
  merge_config(
      sub, o.config,
      {Binding{"fit", [&](const json& v) { o.fit_dir = v.get<std::string>(); }},
       Binding{"record", [&](const json& v) { o.record = v.get<std::string>(); }},
       Binding{"x", [&](const json& v) {
          o.xs = v.is_string() ? v.get<std::string>() : v.dump();
        }},
       Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
       Binding{"q-levels", [&](const json& v) { o.q_levels = v.is_string() ? v.get<std::string>() : v.dump(); }},
       Binding{"credible-level", [&](const json& v) { o.credible_level = v.get<double>(); }},
       Binding{"threads", [&](const json& v) { o.threads = v.get<int>(); }}});
  if (o.fit_dir.empty()) throw ConfigError("predict needs --fit");
  if (o.record.empty()) throw ConfigError("predict needs --record");
  if (o.xs.empty()) throw ConfigError("predict needs --x");
  if (o.out.empty()) throw ConfigError("predict needs --out");
  if (!(o.credible_level > 0.0 && o.credible_level < 1.0)) {
    throw ConfigError("credible level must lie in (0, 1)");
  }
  std::vector<double> q = o.q_levels.empty() ? evreg::default_q_levels()
                                             : parse_list(o.q_levels);
  check_levels(q);
  const std::vector<double> xs = parse_list(o.xs);

  json resolved{{"fit", o.fit_dir}, {"record", o.record}, {"x", xs},
                {"out", o.out},     {"q-levels", q},      {"credible-level", o.credible_level},
                {"threads", o.threads}};
  print_config(o.show_config, resolved);

  const evreg::McmcChain chain = load_chain(o.fit_dir);
  json rec_doc;
  try {
    rec_doc = json::parse(evreg::read_text_file(o.record));
  } catch (const json::exception& e) {
    throw evreg::DataError("record " + o.record + ": " + e.what());
  }
  const evreg::TransformRecord rec = evreg::transform_record_from_json(rec_doc);

  // The covariate grid must be ascending and unique on the Frechet scale;
  // outputs are then read back in input order.
  std::vector<bool> x_extrap(xs.size());
  std::vector<double> zs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    bool flag = false;
    zs[i] = rec.margin_x.to_frechet(xs[i], &flag);
    x_extrap[i] = flag;
  }
  std::vector<double> grid = zs;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::map<double, std::size_t> grid_index;
  for (std::size_t i = 0; i < grid.size(); ++i) grid_index[grid[i]] = i;

  const evreg::RegressionManifold man =
      evreg::posterior_manifold(chain, q, grid, o.credible_level, o.threads);

  std::ostringstream csv;
  csv << "q,x,x_frechet,y_frechet,y,lo,hi,extrapolated\n";
  for (std::size_t iq = 0; iq < q.size(); ++iq) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const std::size_t ix = grid_index.at(zs[i]);
      const std::size_t cell = iq * grid.size() + ix;
      bool ey = false, elo = false, ehi = false;
      const double y = rec.margin_y.from_frechet(man.values[cell], &ey);
      const double lo = rec.margin_y.from_frechet(man.lower[cell], &elo);
      const double hi = rec.margin_y.from_frechet(man.upper[cell], &ehi);
      const bool extrap = x_extrap[i] || ey || elo || ehi;
      csv << evreg::fmt12(q[iq]) << ',' << evreg::fmt12(xs[i]) << ','
          << evreg::fmt12(zs[i]) << ',' << evreg::fmt12(man.values[cell]) << ','
          << evreg::fmt12(y) << ',' << evreg::fmt12(lo) << ',' << evreg::fmt12(hi) << ','
          << (extrap ? 1 : 0) << '\n';
    }
  }
  evreg::atomic_write_text(o.out, csv.str());
  std::cout << "predict: levels=" << q.size() << " points=" << xs.size() << " -> "
            << o.out << '\n';
}

struct ResidualOpts {
  std::string pairs, fit_dir, out;
  ModelOpts model;
  double threshold_u = 0.0;
  std::string config;
  bool show_config = false;
};

void run_residuals(CLI::App* sub, ResidualOpts& o) {
  merge_config(
      sub, o.config,
      {Binding{"pairs", [&](const json& v) { o.pairs = v.get<std::string>(); }},
       Binding{"fit", [&](const json& v) { o.fit_dir = v.get<std::string>(); }},
       Binding{"out", [&](const json& v) { o.out = v.get<std::string>(); }},
       Binding{"threshold-u", [&](const json& v) { o.threshold_u = v.get<double>(); }},
       Binding{"model", [&](const json& v) { o.model.name = v.get<std::string>(); }},
       Binding{"alpha", [&](const json& v) { o.model.alpha = v.get<double>(); }},
       Binding{"lambda", [&](const json& v) { o.model.lambda = v.get<double>(); }},
       Binding{"beta", [&](const json& v) { o.model.beta = v.get<double>(); }},
       Binding{"scenario", [&](const json& v) { o.model.scenario = v.get<int>(); }}});
  if (o.pairs.empty()) throw ConfigError("residuals needs --pairs");
  if (o.out.empty()) throw ConfigError("residuals needs --out");
  const bool from_fit = !o.fit_dir.empty();
  const bool from_model = o.model.scenario != 0 || model_given(o.model);
  if (from_fit == from_model) {
    throw ConfigError("residuals needs exactly one of --fit or a model");
  }
  if (from_fit && sub->count("--threshold-u") > 0) {
    throw ConfigError("--threshold-u comes from the fit; drop the flag");
  }
  if (o.threshold_u < 0.0) throw ConfigError("--threshold-u must be >= 0");

  json resolved{{"pairs", o.pairs}, {"out", o.out}};
  if (from_fit) resolved["fit"] = o.fit_dir;
  if (from_model) {
    resolved.update(model_config_json(o.model));
    resolved["threshold-u"] = o.threshold_u;
  }
  print_config(o.show_config, resolved);

  const auto pairs = evreg::read_pairs_csv(o.pairs);
  evreg::ResidualReport rep;
  if (from_fit) {
    rep = evreg::posterior_quantile_residuals(pairs, load_chain(o.fit_dir));
  } else {
    const evreg::EvModel model = make_model(o.model);
    rep = evreg::quantile_residuals(
        pairs,
        [&model](double y, double x) { return evreg::conditional_cdf(model, y, x); },
        o.threshold_u);
  }
  evreg::write_residuals_csv(o.out, rep);
  std::cout << "residuals: n=" << rep.rows.size() << " ks=" << evreg::fmt12(rep.ks_statistic)
            << " pvalue=" << evreg::fmt12(rep.ks_pvalue) << " -> " << o.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tail regression of componentwise block maxima"};
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* s_sim = app.add_subcommand("simulate", "draw pairs from a parametric model");
  add_model_options(s_sim, sim.model, true);
  s_sim->add_option("--n", sim.n, "number of pairs");
  s_sim->add_option("--seed", sim.seed, "random seed");
  s_sim->add_option("--out", sim.out, "output pairs csv");
  s_sim->add_option("--config", sim.config, "json config file");
  s_sim->add_flag("--print-config", sim.show_config, "print the resolved configuration");
  s_sim->callback([&] { run_simulate(s_sim, sim); });

  TransformOpts tr;
  CLI::App* s_tr = app.add_subcommand("transform", "price csvs to weekly-maxima frechet pairs");
  s_tr->add_option("--prices-x", tr.prices_x, "covariate price csv (Date, Close)");
  s_tr->add_option("--prices-y", tr.prices_y, "response price csv (Date, Close)");
  s_tr->add_option("--out", tr.out, "output pairs csv");
  s_tr->add_option("--record", tr.record, "sidecar json with margins and labels");
  s_tr->add_option("--config", tr.config, "json config file");
  s_tr->add_flag("--print-config", tr.show_config, "print the resolved configuration");
  s_tr->callback([&] { run_transform(s_tr, tr); });

  FitOpts fit;
  CLI::App* s_fit = app.add_subcommand("fit", "sample the angular density posterior");
  s_fit->add_option("--pairs", fit.pairs, "frechet pairs csv");
  s_fit->add_option("--out", fit.out, "output directory");
  s_fit->add_option("--iterations", fit.iterations, "mcmc sweeps");
  s_fit->add_option("--burn-in", fit.burn_in, "sweeps discarded and used for adaptation");
  s_fit->add_option("--concentration", fit.concentration, "dirichlet prior concentration");
  s_fit->add_option("--order", fit.order, "bernstein order, 0 = automatic");
  s_fit->add_option("--seed", fit.seed, "random seed");
  s_fit->add_option("--radial-quantile", fit.radial_quantile, "radial threshold quantile");
  s_fit->add_option("--initial-step", fit.initial_step, "initial proposal step");
  s_fit->add_option("--adapt-window", fit.adapt_window, "adaptation window length");
  s_fit->add_option("--target-accept", fit.target_accept, "adaptation target rate");
  s_fit->add_option("--config", fit.config, "json config file");
  s_fit->add_flag("--print-config", fit.show_config, "print the resolved configuration");
  s_fit->callback([&] { run_fit(s_fit, fit); });

  ManifoldOpts man;
  CLI::App* s_man = app.add_subcommand("manifold", "conditional quantile curves on a grid");
  s_man->add_option("--fit", man.fit_dir, "fit directory (posterior curves with bands)");
  add_model_options(s_man, man.model, true);
  s_man->add_option("--out", man.out, "output csv");
  s_man->add_option("--q-levels", man.q_levels, "comma list of quantile levels");
  s_man->add_option("--x-grid", man.x_grid, "comma list of covariate points");
  s_man->add_option("--x-min", man.x_min, "geometric grid start");
  s_man->add_option("--x-max", man.x_max, "geometric grid end");
  s_man->add_option("--x-count", man.x_count, "geometric grid size");
  s_man->add_option("--credible-level", man.credible_level, "band mass");
  s_man->add_option("--threads", man.threads, "worker threads, 0 = hardware");
  s_man->add_option("--config", man.config, "json config file");
  s_man->add_flag("--print-config", man.show_config, "print the resolved configuration");
  s_man->callback([&] { run_manifold(s_man, man); });

  PredictOpts pred;
  CLI::App* s_pred = app.add_subcommand("predict", "data-scale quantiles at new covariate values");
  s_pred->add_option("--fit", pred.fit_dir, "fit directory");
  s_pred->add_option("--record", pred.record, "transform sidecar json");
  s_pred->add_option("--x", pred.xs, "comma list of covariate values, data scale");
  s_pred->add_option("--out", pred.out, "output csv");
  s_pred->add_option("--q-levels", pred.q_levels, "comma list of quantile levels");
  s_pred->add_option("--credible-level", pred.credible_level, "band mass");
  s_pred->add_option("--threads", pred.threads, "worker threads, 0 = hardware");
  s_pred->add_option("--config", pred.config, "json config file");
  s_pred->add_flag("--print-config", pred.show_config, "print the resolved configuration");
  s_pred->callback([&] { run_predict(s_pred, pred); });

  ResidualOpts res;
  CLI::App* s_res = app.add_subcommand("residuals", "quantile residuals and a normality check");
  s_res->add_option("--pairs", res.pairs, "frechet pairs csv");
  s_res->add_option("--fit", res.fit_dir, "fit directory (posterior mean cdf)");
  add_model_options(s_res, res.model, true);
  s_res->add_option("--threshold-u", res.threshold_u, "tail threshold on x + y (model mode)");
  s_res->add_option("--out", res.out, "output csv");
  s_res->add_option("--config", res.config, "json config file");
  s_res->add_flag("--print-config", res.show_config, "print the resolved configuration");
  s_res->callback([&] { run_residuals(s_res, res); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const evreg::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
