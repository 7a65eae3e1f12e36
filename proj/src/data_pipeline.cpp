#include "evreg/data_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "evreg/errors.hpp"
#include "evreg/text_io.hpp"

namespace evreg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_missing(const std::string& field) {
  const std::string f = lower(field);
  return f.empty() || f == "na" || f == "nan" || f == "null";
}

struct CivilDate {
  int year = 0, month = 0, day = 0;
};

CivilDate parse_iso_date(const std::string& s) {
  CivilDate cd;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d%c", &cd.year, &cd.month, &cd.day, &extra) != 3) {
    throw DataError("bad ISO date '" + s + "'");
  }
  if (cd.month < 1 || cd.month > 12 || cd.day < 1 || cd.day > 31) {
    throw DataError("bad ISO date '" + s + "'");
  }
  return cd;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

CivilDate civil_from_days(long long z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

}  // namespace

PriceSeries read_price_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("price csv: empty file " + path.string());
  const auto header = split_csv(line);
  int date_col = -1, close_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = lower(trim(header[i]));
    if (name == "date") date_col = static_cast<int>(i);
    if (name == "close") close_col = static_cast<int>(i);
  }
  if (date_col < 0 || close_col < 0) {
    throw DataError("price csv: need Date and Close columns in " + path.string());
  }

  std::vector<std::pair<std::string, double>> rows;
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() <= static_cast<std::size_t>(std::max(date_col, close_col))) {
      throw DataError("price csv row " + std::to_string(lineno) + ": too few fields");
    }
    const std::string date = trim(fields[date_col]);
    const std::string close = trim(fields[close_col]);
    parse_iso_date(date);  // validates the format
    if (is_missing(close)) {
      ++dropped;
      continue;
    }
    double value;
    try {
      value = parse_double(close);
    } catch (const DataError&) {
      throw DataError("price csv row " + std::to_string(lineno) +
                      ": unparsable close '" + close + "'");
    }
    if (!(value > 0.0)) {
      throw DataError("price csv row " + std::to_string(lineno) +
                      ": nonpositive close " + close);
    }
    rows.emplace_back(date, value);
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  PriceSeries out;
  out.dropped_rows = dropped;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first) {
      throw DataError("price csv: duplicate date " + rows[i].first);
    }
    out.dates.push_back(rows[i].first);
    out.closes.push_back(rows[i].second);
  }
  return out;
}

ReturnSeries negative_log_returns(const PriceSeries& series) {
  if (series.closes.size() < 2) {
    throw DataError("negative_log_returns: need at least two prices");
  }
  ReturnSeries out;
  out.dates.reserve(series.closes.size() - 1);
  out.values.reserve(series.closes.size() - 1);
  for (std::size_t i = 1; i < series.closes.size(); ++i) {
    out.dates.push_back(series.dates[i]);
    out.values.push_back(-(std::log(series.closes[i]) - std::log(series.closes[i - 1])));
  }
  return out;
}

std::string iso_week_label(const std::string& iso_date) {
  const CivilDate cd = parse_iso_date(iso_date);
  const long long days = days_from_civil(cd.year, cd.month, cd.day);
  // 1970-01-01 is a Thursday; ISO weekday runs Monday=1 .. Sunday=7.
  const int iso_weekday = static_cast<int>(((days % 7) + 7 + 3) % 7) + 1;
  const long long thursday = days + (4 - iso_weekday);
  const CivilDate th = civil_from_days(thursday);
  const long long jan1 = days_from_civil(th.year, 1, 1);
  const int week = static_cast<int>((thursday - jan1) / 7) + 1;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-W%02d", th.year, week);
  return buf;
}

BlockMaxima componentwise_block_maxima(const std::vector<ReturnSeries>& series) {
  if (series.empty()) throw DataError("block maxima: no series given");
  std::vector<std::map<std::string, double>> per_week(series.size());
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& rs = series[s];
    if (rs.dates.size() != rs.values.size()) {
      throw DataError("block maxima: ragged return series");
    }
    for (std::size_t i = 0; i < rs.dates.size(); ++i) {
      const std::string label = iso_week_label(rs.dates[i]);
      auto [it, fresh] = per_week[s].emplace(label, rs.values[i]);
      if (!fresh) it->second = std::max(it->second, rs.values[i]);
    }
  }
  BlockMaxima out;
  out.columns.resize(series.size());
  for (const auto& [label, v0] : per_week[0]) {
    bool everywhere = true;
    for (std::size_t s = 1; s < series.size(); ++s) {
      if (per_week[s].find(label) == per_week[s].end()) {
        everywhere = false;
        break;
      }
    }
    if (!everywhere) continue;
    out.labels.push_back(label);
    out.columns[0].push_back(v0);
    for (std::size_t s = 1; s < series.size(); ++s) {
      out.columns[s].push_back(per_week[s].at(label));
    }
  }
  if (out.labels.empty()) throw DataError("block maxima: the series share no week");
  return out;
}

std::vector<double> empirical_frechet_transform(const std::vector<double>& block_maxima) {
  const std::size_t m = block_maxima.size();
  if (m < 2) throw DataError("frechet transform: need at least two block maxima");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return block_maxima[a] < block_maxima[b];
  });
  // Average rank across ties keeps the transform symmetric in tied entries.
  std::vector<double> rank(m);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && block_maxima[order[j + 1]] == block_maxima[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  std::vector<double> z(m);
  for (std::size_t t = 0; t < m; ++t) {
    z[t] = -1.0 / std::log(rank[t] / static_cast<double>(m + 1));
  }
  return z;
}

EmpiricalMargin::EmpiricalMargin(std::vector<double> sample) : sorted_(std::move(sample)) {
  if (sorted_.size() < 2) throw DataError("empirical margin: need at least two points");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalMargin::cdf(double value, bool* extrapolated) const {
  const std::size_t m = sorted_.size();
  const double denom = static_cast<double>(m + 1);
  if (extrapolated) *extrapolated = value < sorted_.front() || value > sorted_.back();
  if (value <= sorted_.front()) return 1.0 / denom;
  if (value >= sorted_.back()) return static_cast<double>(m) / denom;
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), value);
  const std::size_t hi = static_cast<std::size_t>(it - sorted_.begin());  // 0-based
  const std::size_t lo = hi - 1;
  const double p_lo = static_cast<double>(lo + 1) / denom;
  const double p_hi = static_cast<double>(hi + 1) / denom;
  const double span = sorted_[hi] - sorted_[lo];
  if (span <= 0.0) return p_hi;
  return p_lo + (p_hi - p_lo) * (value - sorted_[lo]) / span;
}

double EmpiricalMargin::quantile(double p, bool* extrapolated) const {
  const std::size_t m = sorted_.size();
  const double denom = static_cast<double>(m + 1);
  const double p_min = 1.0 / denom;
  const double p_max = static_cast<double>(m) / denom;
  if (extrapolated) *extrapolated = p < p_min || p > p_max;
  if (p <= p_min) return sorted_.front();
  if (p >= p_max) return sorted_.back();
  const double r = p * denom;  // fractional rank in [1, m]
  const std::size_t lo = static_cast<std::size_t>(std::floor(r)) - 1;
  const std::size_t hi = std::min(lo + 1, m - 1);
  const double frac = r - std::floor(r);
  return sorted_[lo] + (sorted_[hi] - sorted_[lo]) * frac;
}

double EmpiricalMargin::to_frechet(double value, bool* extrapolated) const {
  return -1.0 / std::log(cdf(value, extrapolated));
}

double EmpiricalMargin::from_frechet(double z, bool* extrapolated) const {
  if (!(z > 0.0)) throw std::domain_error("empirical margin: frechet value must be positive");
  return quantile(std::exp(-1.0 / z), extrapolated);
}

nlohmann::json EmpiricalMargin::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const double v : sorted_) arr.push_back(normalize12(v));
  return nlohmann::json{{"sorted_sample", std::move(arr)}};
}

EmpiricalMargin EmpiricalMargin::from_json(const nlohmann::json& j) {
  try {
    return EmpiricalMargin(j.at("sorted_sample").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("empirical margin json: ") + e.what());
  }
}

void write_pairs_csv(const std::filesystem::path& path,
                     const std::vector<FrechetPair>& pairs) {
  std::ostringstream out;
  out << "x,y\n";
  for (const auto& p : pairs) out << fmt12(p.x) << ',' << fmt12(p.y) << '\n';
  atomic_write_text(path, out.str());
}

std::vector<FrechetPair> read_pairs_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("pairs csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") throw DataError("pairs csv: expected header 'x,y', got '" + line + "'");
  std::vector<FrechetPair> pairs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) {
      throw DataError("pairs csv row " + std::to_string(lineno) + ": expected two fields");
    }
    FrechetPair p;
    p.x = parse_double(f[0]);
    p.y = parse_double(f[1]);
    if (!(p.x > 0.0) || !(p.y > 0.0)) {
      throw DataError("pairs csv row " + std::to_string(lineno) + ": values must be positive");
    }
    pairs.push_back(p);
  }
  return pairs;
}

nlohmann::json transform_record_to_json(const TransformRecord& rec) {
  nlohmann::json j;
  j["block_rule"] = "iso-week";
  j["tie_rule"] = "average-rank";
  j["m"] = rec.labels.size();
  j["labels"] = rec.labels;
  j["dropped_rows"] = {{"x", rec.dropped_x}, {"y", rec.dropped_y}};
  j["margins"] = {{"x", rec.margin_x.to_json()}, {"y", rec.margin_y.to_json()}};
  return j;
}

TransformRecord transform_record_from_json(const nlohmann::json& j) {
  TransformRecord rec;
  try {
    rec.labels = j.at("labels").get<std::vector<std::string>>();
    rec.margin_x = EmpiricalMargin::from_json(j.at("margins").at("x"));
    rec.margin_y = EmpiricalMargin::from_json(j.at("margins").at("y"));
    rec.dropped_x = j.at("dropped_rows").at("x").get<std::size_t>();
    rec.dropped_y = j.at("dropped_rows").at("y").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transform record json: ") + e.what());
  }
  return rec;
}

}  // namespace evreg
