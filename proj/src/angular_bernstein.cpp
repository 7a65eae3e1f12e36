#include "evreg/angular_bernstein.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "evreg/errors.hpp"
#include "evreg/quadrature.hpp"
#include "evreg/special_functions.hpp"
#include "evreg/text_io.hpp"

namespace evreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_order(int J, int d) {
  if (d < 2) throw std::domain_error("bernstein: dimension d must be >= 2");
  if (J < d) throw std::domain_error("bernstein: order J must be >= d");
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// A is n x n row-major. Returns false on a singular pivot.
bool solve_dense(std::vector<double>& A, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::fabs(A[r * n + col]) > std::fabs(A[piv * n + col])) piv = r;
    }
    if (std::fabs(A[piv * n + col]) < 1e-14) return false;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r * n + col] / A[col * n + col];
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= A[r * n + c] * b[c];
    b[r] = acc / A[r * n + r];
  }
  return true;
}

double logsumexp(std::span<const double> v) {
  double m = kNegInf;
  for (const double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (const double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

std::vector<Composition> enumerate_compositions(int J, int d) {
  check_order(J, d);
  std::vector<Composition> out;
  Composition cur(d, 1);
  // Fill positions left to right; the tail always keeps at least 1 per slot.
  std::function<void(int, int)> rec = [&](int pos, int remaining) {
    if (pos == d - 1) {
      cur[pos] = remaining;
      out.push_back(cur);
      return;
    }
    const int maxv = remaining - (d - 1 - pos);
    for (int v = 1; v <= maxv; ++v) {
      cur[pos] = v;
      rec(pos + 1, remaining - v);
    }
  };
  rec(0, J);
  return out;
}

std::vector<std::size_t> corner_positions(const std::vector<Composition>& comps,
                                          int J, int d) {
  std::vector<std::size_t> pos(d);
  for (int j = 0; j < d; ++j) {
    Composition corner(d, 1);
    corner[j] = J - d + 1;
    const auto it = std::find(comps.begin(), comps.end(), corner);
    if (it == comps.end()) {
      throw std::logic_error("corner_positions: corner composition missing");
    }
    pos[j] = static_cast<std::size_t>(it - comps.begin());
  }
  return pos;
}

std::optional<BernsteinAngularDensity> try_weights_from_logits(
    std::span<const double> free_logits, int J, int d) {
  check_order(J, d);
  BernsteinAngularDensity h;
  h.J = J;
  h.d = d;
  h.compositions = enumerate_compositions(J, d);
  const std::size_t m = h.compositions.size();

  if (J == d) {
    // Single composition (1, ..., 1); the constraints force weight one.
    if (!free_logits.empty()) {
      throw std::invalid_argument("weights_from_logits: expected no free logits at J=d");
    }
    h.weights = {1.0};
    return h;
  }

  const std::vector<std::size_t> corners = corner_positions(h.compositions, J, d);
  std::vector<bool> is_corner(m, false);
  for (const std::size_t c : corners) is_corner[c] = true;
  if (free_logits.size() != m - static_cast<std::size_t>(d)) {
    throw std::invalid_argument(
        "weights_from_logits: expected " + std::to_string(m - d) + " logits, got " +
        std::to_string(free_logits.size()));
  }

  // Generalized logistic map pi = exp(l) / (d + sum exp(l)) over free slots.
  double den = static_cast<double>(d);
  for (const double l : free_logits) den += std::exp(l);
  if (!std::isfinite(den)) return std::nullopt;

  h.weights.assign(m, 0.0);
  std::size_t fi = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!is_corner[i]) h.weights[i] = std::exp(free_logits[fi++]) / den;
  }

  // Residual constraints after the free mass: one normalization row and the
  // first d-1 angular-mean rows; the remaining mean row is redundant.
  std::vector<double> rhs(d, 0.0);
  rhs[0] = 1.0;
  for (int j = 1; j < d; ++j) rhs[j] = static_cast<double>(J) / d;
  for (std::size_t i = 0; i < m; ++i) {
    if (is_corner[i]) continue;
    rhs[0] -= h.weights[i];
    for (int j = 1; j < d; ++j) {
      rhs[j] -= h.compositions[i][j - 1] * h.weights[i];
    }
  }
  std::vector<double> A(static_cast<std::size_t>(d) * d, 1.0);
  for (int j = 1; j < d; ++j) {
    for (int kcol = 0; kcol < d; ++kcol) {
      A[j * d + kcol] = h.compositions[corners[kcol]][j - 1];
    }
  }
  if (!solve_dense(A, rhs, d)) return std::nullopt;
  for (int j = 0; j < d; ++j) {
    if (!std::isfinite(rhs[j])) return std::nullopt;
    // The solve carries O(1e-15) roundoff, and sampled states sit arbitrarily
    // close to the face where a corner weight vanishes; a tiny negative is the
    // boundary, not an inadmissible state.
    if (rhs[j] < 0.0) {
      if (rhs[j] < -1e-12) return std::nullopt;
      rhs[j] = 0.0;
    }
    h.weights[corners[j]] = rhs[j];
  }
  return h;
}

BernsteinAngularDensity weights_from_logits(std::span<const double> free_logits,
                                            int J, int d) {
  auto h = try_weights_from_logits(free_logits, J, d);
  if (!h) {
    throw InvalidWeights("weights_from_logits: constraint solve left a negative corner weight (J=" +
                         std::to_string(J) + ", d=" + std::to_string(d) + ")");
  }
  return std::move(*h);
}

double density(const BernsteinAngularDensity& h, std::span<const double> w) {
  if (static_cast<int>(w.size()) != h.d) {
    throw std::invalid_argument("density: point dimension mismatch");
  }
  double sum = 0.0;
  for (const double v : w) {
    if (!(v >= 0.0)) throw std::domain_error("density: simplex point has negative component");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-8) {
    throw std::domain_error("density: point does not lie on the simplex");
  }

  const double lgJ = log_gamma(h.J);
  double acc = 0.0;
  for (std::size_t i = 0; i < h.compositions.size(); ++i) {
    const double wgt = h.weights[i];
    if (wgt == 0.0) continue;
    double lt = lgJ;
    bool vanishes = false;
    for (int j = 0; j < h.d; ++j) {
      const int a = h.compositions[i][j];
      lt -= log_gamma(a);
      if (a > 1) {
        if (w[j] == 0.0) {  // w^0 = 1 is the only boundary survivor
          vanishes = true;
          break;
        }
        lt += (a - 1.0) * std::log(w[j]);
      }
    }
    if (!vanishes) acc += wgt * std::exp(lt);
  }
  return acc;
}

double conditional_cdf_p1(const BernsteinAngularDensity& h, double y, double x) {
  if (h.d != 2) throw std::invalid_argument("conditional_cdf_p1: requires d = 2");
  if (!(x > 0.0) || !(y > 0.0)) {
    throw std::domain_error("conditional_cdf_p1: coordinates must be positive");
  }
  const int J = h.J;
  const double omega = x / (x + y);

  // Binomial tails give every incomplete beta with integer parameters along
  // a1 + a2 = J + 1: I_om(i+1, J-i) = P(Bin(J, om) >= i+1) and
  // I_om(i, J-i+1) = P(Bin(J, om) >= i). One pmf table serves all terms.
  std::vector<double> cum(J + 1);
  const double lom = std::log(omega);
  const double l1m = std::log1p(-omega);
  const double lgJ1 = log_gamma(J + 1.0);
  double c = 0.0;
  for (int j = 0; j <= J; ++j) {
    c += std::exp(lgJ1 - log_gamma(j + 1.0) - log_gamma(J - j + 1.0) + j * lom +
                  (J - j) * l1m);
    cum[j] = std::min(c, 1.0);
  }

  double outer = 0.0;
  double expo = 0.0;
  for (std::size_t i = 0; i < h.compositions.size(); ++i) {
    const double wgt = h.weights[i];
    if (wgt == 0.0) continue;
    const int a1 = h.compositions[i][0];
    const int a2 = h.compositions[i][1];
    const double tail_hi = cum[a1];            // 1 - Be(om; a1+1, a2)
    const double tail_lo = 1.0 - cum[a1 - 1];  // Be(om; a1, a2+1)
    outer += wgt * a1 * tail_hi;
    expo += wgt * (a1 * tail_hi / x + a2 * tail_lo / y);
  }
  const double scale = 2.0 / J;
  const double arg = std::min(-scale * expo + 1.0 / x, 700.0);
  return std::clamp(scale * outer * std::exp(arg), 0.0, 1.0);
}

double conditional_cdf_approx(const BernsteinAngularDensity& h, double y,
                              std::span<const double> x,
                              const ApproxCdfConfig& cfg) {
  const int d = h.d;
  const int p = static_cast<int>(x.size());
  if (p < 1 || p + 1 != d) {
    throw std::invalid_argument("conditional_cdf_approx: covariate count must equal d-1");
  }
  if (!(y > 0.0)) throw std::domain_error("conditional_cdf_approx: y must be positive");
  double S = 0.0;
  std::vector<double> lx(p);
  for (int i = 0; i < p; ++i) {
    if (!(x[i] > 0.0)) {
      throw std::domain_error("conditional_cdf_approx: covariates must be positive");
    }
    S += x[i];
    lx[i] = std::log(x[i]);
  }
  const int J = h.J;

  // Per-composition log coefficient: log pi - log B_alpha + sum (a_i-1) log x_i,
  // with the response exponent a_d handled inside the radial integral.
  const double lgJ = log_gamma(J);
  std::vector<double> log_coef(h.compositions.size(), kNegInf);
  for (std::size_t i = 0; i < h.compositions.size(); ++i) {
    if (h.weights[i] <= 0.0) continue;
    double lc = std::log(h.weights[i]) + lgJ;
    for (int j = 0; j < d; ++j) lc -= log_gamma(h.compositions[i][j]);
    for (int j = 0; j < p; ++j) lc += (h.compositions[i][j] - 1.0) * lx[j];
    log_coef[i] = lc;
  }

  // log of int_0^upper t^{a-1} (t + S)^{-J-1} dt on t = s/(1-s), for each
  // response exponent a; shift-and-sum keeps the result in log space.
  const double s_hi_num = y / (1.0 + y);
  auto log_radial = [&](int order, int a, double s_hi) {
    const GaussLegendre& gl = gauss_legendre(order);
    const double half = 0.5 * s_hi;
    double m = kNegInf;
    std::vector<double> terms(gl.nodes.size());
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double s = half * (gl.nodes[k] + 1.0);
      const double om1 = 1.0 - s;
      const double t = s / om1;
      const double g = (a - 1.0) * std::log(t) - (J + 1.0) * std::log(t + S) -
                       2.0 * std::log(om1) + std::log(gl.weights[k]);
      terms[k] = g;
      m = std::max(m, g);
    }
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (const double g : terms) acc += std::exp(g - m);
    return m + std::log(acc) + std::log(half);
  };

  auto evaluate = [&](int order) {
    const int a_max = J - d + 1;
    std::vector<double> lnum_a(a_max + 1), lden_a(a_max + 1);
    for (int a = 1; a <= a_max; ++a) {
      lnum_a[a] = log_radial(order, a, s_hi_num);
      lden_a[a] = log_radial(order, a, 1.0);
    }
    std::vector<double> num_terms, den_terms;
    num_terms.reserve(h.compositions.size());
    den_terms.reserve(h.compositions.size());
    for (std::size_t i = 0; i < h.compositions.size(); ++i) {
      if (log_coef[i] == kNegInf) continue;
      const int a = h.compositions[i][d - 1];
      num_terms.push_back(log_coef[i] + lnum_a[a]);
      den_terms.push_back(log_coef[i] + lden_a[a]);
    }
    const double ln = logsumexp(num_terms);
    const double ld = logsumexp(den_terms);
    if (ld == kNegInf) {
      throw QuadratureError("conditional_cdf_approx: mixture mass vanished");
    }
    return std::exp(ln - ld);
  };

  double prev = evaluate(cfg.initial_order);
  for (int order = 2 * cfg.initial_order; order <= cfg.max_order; order *= 2) {
    const double cur = evaluate(order);
    if (std::fabs(cur - prev) <= cfg.rel_tol * std::max(std::fabs(cur), 1e-300)) {
      return std::clamp(cur, 0.0, 1.0);
    }
    prev = cur;
  }
  throw QuadratureError("conditional_cdf_approx: no convergence up to order " +
                        std::to_string(cfg.max_order));
}

PseudoAngleSample decompose(const std::vector<std::vector<double>>& rows,
                            double radial_quantile) {
  if (rows.empty()) throw std::invalid_argument("decompose: empty input");
  if (!(radial_quantile > 0.0 && radial_quantile < 1.0)) {
    throw std::domain_error("decompose: radial quantile must lie in (0, 1)");
  }
  const int d = static_cast<int>(rows[0].size());
  if (d < 2) throw std::invalid_argument("decompose: rows must have dimension >= 2");

  const std::size_t n = rows.size();
  std::vector<double> radii(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != d) {
      throw std::invalid_argument("decompose: ragged input at row " + std::to_string(i));
    }
    double r = 0.0;
    for (const double v : rows[i]) {
      if (!(v > 0.0)) {
        throw std::domain_error("decompose: nonpositive component at row " +
                                std::to_string(i));
      }
      r += v;
    }
    radii[i] = r;
  }

  std::vector<double> sorted = radii;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t pos = static_cast<std::size_t>(
      std::ceil(radial_quantile * static_cast<double>(n)));
  const double u = sorted[std::min(pos, n) - 1];

  PseudoAngleSample s;
  s.d = d;
  s.threshold_u = u;
  s.radial_quantile = radial_quantile;
  for (std::size_t i = 0; i < n; ++i) {
    if (radii[i] > u) {
      std::vector<double> w(d);
      for (int j = 0; j < d; ++j) w[j] = rows[i][j] / radii[i];
      s.angles.push_back(std::move(w));
      s.radii.push_back(radii[i]);
    }
  }
  if (s.k() < static_cast<std::size_t>(d + 1)) {
    throw std::runtime_error("decompose: only " + std::to_string(s.k()) +
                             " exceedances above u=" + fmt12(u) +
                             "; need at least " + std::to_string(d + 1));
  }
  return s;
}

nlohmann::json density_to_json(const BernsteinAngularDensity& h) {
  nlohmann::json j;
  j["J"] = h.J;
  j["d"] = h.d;
  j["compositions"] = h.compositions;
  nlohmann::json w = nlohmann::json::array();
  for (const double v : h.weights) w.push_back(normalize12(v));
  j["weights"] = std::move(w);
  return j;
}

BernsteinAngularDensity density_from_json(const nlohmann::json& j) {
  BernsteinAngularDensity h;
  try {
    h.J = j.at("J").get<int>();
    h.d = j.at("d").get<int>();
    h.compositions = j.at("compositions").get<std::vector<Composition>>();
    h.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("density json: ") + e.what());
  }
  check_order(h.J, h.d);
  if (h.compositions.size() != h.weights.size() || h.compositions.empty()) {
    throw DataError("density json: compositions and weights do not align");
  }
  double sum = 0.0;
  for (const double w : h.weights) {
    if (!(w >= 0.0)) throw DataError("density json: negative weight");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-8) {
    throw DataError("density json: weights sum to " + fmt12(sum));
  }
  return h;
}

void write_angles_csv(const std::filesystem::path& path, const PseudoAngleSample& s) {
  std::ostringstream out;
  out << "# u=" << fmt12(s.threshold_u) << '\n';
  out << "# radial_quantile=" << fmt12(s.radial_quantile) << '\n';
  out << 'r';
  for (int j = 1; j <= s.d; ++j) out << ",w_" << j;
  out << '\n';
  for (std::size_t i = 0; i < s.k(); ++i) {
    out << fmt12(s.radii[i]);
    for (int j = 0; j < s.d; ++j) out << ',' << fmt12(s.angles[i][j]);
    out << '\n';
  }
  atomic_write_text(path, out.str());
}

PseudoAngleSample read_angles_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  PseudoAngleSample s;
  bool have_u = false, have_q = false, have_header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# u=", 0) == 0) {
      s.threshold_u = parse_double(line.substr(4));
      have_u = true;
      continue;
    }
    if (line.rfind("# radial_quantile=", 0) == 0) {
      s.radial_quantile = parse_double(line.substr(18));
      have_q = true;
      continue;
    }
    if (!have_header) {
      if (line.rfind("r,w_1", 0) != 0) {
        throw DataError("angles csv: unexpected header '" + line + "'");
      }
      s.d = static_cast<int>(split_csv(line).size()) - 1;
      have_header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (static_cast<int>(f.size()) != s.d + 1) {
      throw DataError("angles csv: bad field count at row " + std::to_string(row));
    }
    s.radii.push_back(parse_double(f[0]));
    std::vector<double> w(s.d);
    for (int j = 0; j < s.d; ++j) w[j] = parse_double(f[j + 1]);
    s.angles.push_back(std::move(w));
  }
  if (!have_u || !have_q || !have_header) {
    throw DataError("angles csv: missing metadata or header in " + path.string());
  }
  return s;
}

}  // namespace evreg
