#include "evreg/manifold.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "evreg/errors.hpp"
#include "evreg/special_functions.hpp"
#include "evreg/text_io.hpp"

namespace evreg {

namespace {

void check_levels(std::span<const double> q_levels, std::span<const double> x_grid) {
  if (q_levels.empty() || x_grid.empty()) {
    throw std::invalid_argument("manifold: empty quantile levels or covariate grid");
  }
  for (std::size_t i = 0; i < q_levels.size(); ++i) {
    if (!(q_levels[i] > 0.0 && q_levels[i] < 1.0)) {
      throw std::domain_error("manifold: quantile levels must lie in (0, 1)");
    }
    if (i > 0 && !(q_levels[i] > q_levels[i - 1])) {
      throw std::invalid_argument("manifold: quantile levels must be ascending");
    }
  }
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    if (!(x_grid[i] > 0.0)) {
      throw std::domain_error("manifold: covariate grid must be positive");
    }
    if (i > 0 && !(x_grid[i] > x_grid[i - 1])) {
      throw std::invalid_argument("manifold: covariate grid must be ascending");
    }
  }
}

}  // namespace

double conditional_quantile(const ConditionalCdf& cdf, double q, double x,
                            const CdfInversionConfig& cfg) {
  if (!(x > 0.0)) {
    throw std::domain_error("conditional_quantile: covariate must be positive");
  }
  return invert_monotone_cdf([&](double y) { return cdf(y, x); }, q, x, cfg);
}

double logistic_quantile_closed_form(double alpha, double q, double x) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error("logistic_quantile_closed_form: alpha must lie in (0, 1)");
  }
  if (!(q > 0.0 && q < 1.0)) {
    throw std::domain_error("logistic_quantile_closed_form: q must lie in (0, 1)");
  }
  if (!(x > 0.0)) {
    throw std::domain_error("logistic_quantile_closed_form: x must be positive");
  }
  const double c = alpha / (1.0 - alpha);
  const double z = (c / x) * std::exp(c / x) * std::pow(q, alpha / (alpha - 1.0));
  if (!std::isfinite(z)) {
    throw std::runtime_error("logistic_quantile_closed_form: scale overflow");
  }
  const double w = lambert_w0(z);
  const double inner = std::pow(x * w / c, 1.0 / alpha) - 1.0;
  if (!(inner > 0.0)) {
    throw std::runtime_error("logistic_quantile_closed_form: inner bracket not positive");
  }
  const double y = std::pow(inner, -alpha) * x;
  if (!std::isfinite(y) || !(y > 0.0)) {
    throw std::runtime_error("logistic_quantile_closed_form: non-finite quantile");
  }
  return y;
}

double logistic_quantile(double alpha, double q, double x) {
  if (alpha == 1.0) return independence_quantile(q);
  try {
    return logistic_quantile_closed_form(alpha, q, x);
  } catch (const std::runtime_error&) {
    const EvModel m = Logistic{alpha};
    return conditional_quantile(
        [&m](double y, double xx) { return conditional_cdf(m, y, xx); }, q, x);
  }
}

LinearAsymptote logistic_linear_asymptote(double alpha, double q) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::domain_error("logistic_linear_asymptote: alpha must lie in (0, 1)");
  }
  if (!(q > 0.0 && q < 1.0)) {
    throw std::domain_error("logistic_linear_asymptote: q must lie in (0, 1)");
  }
  const double c = alpha / (1.0 - alpha);
  const double s = std::pow(q, -1.0 / (1.0 - alpha));
  const double beta = std::pow(s - 1.0, -alpha);
  const double gamma =
      c * std::pow(s - 1.0, -alpha - 1.0) * (std::pow(q, -c) - 1.0) * s;
  return {beta, gamma};
}

RegressionManifold manifold_grid(const ConditionalCdf& cdf,
                                 std::span<const double> q_levels,
                                 std::span<const double> x_grid) {
  check_levels(q_levels, x_grid);
  RegressionManifold m;
  m.q_levels.assign(q_levels.begin(), q_levels.end());
  m.x_grid.assign(x_grid.begin(), x_grid.end());
  m.values.resize(m.cells());
  for (std::size_t iq = 0; iq < m.q_levels.size(); ++iq) {
    for (std::size_t ix = 0; ix < m.x_grid.size(); ++ix) {
      try {
        m.values[iq * m.x_grid.size() + ix] =
            conditional_quantile(cdf, m.q_levels[iq], m.x_grid[ix]);
      } catch (const std::exception& e) {
        throw std::runtime_error("manifold_grid: cell (q=" + fmt12(m.q_levels[iq]) +
                                 ", x=" + fmt12(m.x_grid[ix]) + "): " + e.what());
      }
    }
  }
  return m;
}

RegressionManifold model_manifold(const EvModel& model,
                                  std::span<const double> q_levels,
                                  std::span<const double> x_grid) {
  validate(model);
  if (const auto* lg = std::get_if<Logistic>(&model); lg && lg->alpha < 1.0) {
    check_levels(q_levels, x_grid);
    RegressionManifold m;
    m.q_levels.assign(q_levels.begin(), q_levels.end());
    m.x_grid.assign(x_grid.begin(), x_grid.end());
    m.values.resize(m.cells());
    for (std::size_t iq = 0; iq < m.q_levels.size(); ++iq) {
      for (std::size_t ix = 0; ix < m.x_grid.size(); ++ix) {
        m.values[iq * m.x_grid.size() + ix] =
            logistic_quantile(lg->alpha, m.q_levels[iq], m.x_grid[ix]);
      }
    }
    return m;
  }
  return manifold_grid(
      [&model](double y, double x) { return conditional_cdf(model, y, x); },
      q_levels, x_grid);
}

std::vector<double> default_q_levels() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

std::vector<double> default_x_grid() {
  const int n = 100;
  const double lo = 0.1;
  const double hi = 20.0;
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) {
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  }
  g.back() = hi;
  return g;
}

void write_manifold_csv(const std::filesystem::path& path, const RegressionManifold& m) {
  std::ostringstream out;
  out << (m.has_bands() ? "q,x,y,lo,hi\n" : "q,x,y\n");
  for (std::size_t iq = 0; iq < m.q_levels.size(); ++iq) {
    for (std::size_t ix = 0; ix < m.x_grid.size(); ++ix) {
      const std::size_t c = iq * m.x_grid.size() + ix;
      out << fmt12(m.q_levels[iq]) << ',' << fmt12(m.x_grid[ix]) << ','
          << fmt12(m.values[c]);
      if (m.has_bands()) {
        out << ',' << fmt12(m.lower[c]) << ',' << fmt12(m.upper[c]);
      }
      out << '\n';
    }
  }
  atomic_write_text(path, out.str());
}

RegressionManifold read_manifold_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifold csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool bands;
  if (line == "q,x,y") {
    bands = false;
  } else if (line == "q,x,y,lo,hi") {
    bands = true;
  } else {
    throw DataError("manifold csv: unexpected header '" + line + "'");
  }

  RegressionManifold m;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != (bands ? 5u : 3u)) {
      throw DataError("manifold csv: bad field count at row " + std::to_string(row));
    }
    const double q = parse_double(f[0]);
    const double x = parse_double(f[1]);
    if (m.q_levels.empty() || q != m.q_levels.back()) m.q_levels.push_back(q);
    if (m.q_levels.size() == 1) m.x_grid.push_back(x);
    m.values.push_back(parse_double(f[2]));
    if (bands) {
      m.lower.push_back(parse_double(f[3]));
      m.upper.push_back(parse_double(f[4]));
    }
  }
  if (m.values.size() != m.cells()) {
    throw DataError("manifold csv: grid is not rectangular in " + path.string());
  }
  return m;
}

nlohmann::json manifold_to_json(const RegressionManifold& m) {
  nlohmann::json j;
  auto norm = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const double d : v) a.push_back(normalize12(d));
    return a;
  };
  j["q_levels"] = norm(m.q_levels);
  j["x_grid"] = norm(m.x_grid);
  auto rows = [&](const std::vector<double>& flat) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t iq = 0; iq < m.q_levels.size(); ++iq) {
      nlohmann::json r = nlohmann::json::array();
      for (std::size_t ix = 0; ix < m.x_grid.size(); ++ix) {
        r.push_back(normalize12(flat[iq * m.x_grid.size() + ix]));
      }
      a.push_back(std::move(r));
    }
    return a;
  };
  j["values"] = rows(m.values);
  if (m.has_bands()) {
    j["lower"] = rows(m.lower);
    j["upper"] = rows(m.upper);
    j["credible_level"] = normalize12(m.credible_level);
  }
  return j;
}

RegressionManifold manifold_from_json(const nlohmann::json& j) {
  RegressionManifold m;
  try {
    m.q_levels = j.at("q_levels").get<std::vector<double>>();
    m.x_grid = j.at("x_grid").get<std::vector<double>>();
    auto flat = [&](const nlohmann::json& rows) {
      std::vector<double> out;
      out.reserve(m.cells());
      for (const auto& r : rows) {
        for (const auto& v : r) out.push_back(v.get<double>());
      }
      return out;
    };
    m.values = flat(j.at("values"));
    if (j.contains("lower")) {
      m.lower = flat(j.at("lower"));
      m.upper = flat(j.at("upper"));
      m.credible_level = j.at("credible_level").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifold json: ") + e.what());
  }
  if (m.values.size() != m.cells() ||
      (m.has_bands() && (m.lower.size() != m.cells() || m.upper.size() != m.cells()))) {
    throw DataError("manifold json: grid is not rectangular");
  }
  return m;
}

}  // namespace evreg
