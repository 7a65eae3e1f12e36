#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evreg/ev_models.hpp"

namespace evreg {

struct PriceSeries {
  std::vector<std::string> dates;  // ISO YYYY-MM-DD, strictly ascending
  std::vector<double> closes;      // positive
  std::size_t dropped_rows = 0;    // rows with an empty or NA close
};

// Reads a CSV with Date and Close columns (other columns are ignored).
// Rows whose close is empty, "NA", or "null" are dropped and counted; a
// nonpositive or unparsable close is an error. Rows come back date-sorted;
// duplicate dates are an error.
PriceSeries read_price_csv(const std::filesystem::path& path);

struct ReturnSeries {
  std::vector<std::string> dates;  // date of the later price
  std::vector<double> values;
};

// r_t = -(log p_t - log p_{t-1}); positive values are losses.
ReturnSeries negative_log_returns(const PriceSeries& series);

// ISO-8601 week label "GGGG-Www" of a YYYY-MM-DD date: the week belongs to
// the year containing its Thursday.
std::string iso_week_label(const std::string& iso_date);

struct BlockMaxima {
  std::vector<std::string> labels;           // common ISO weeks, ascending
  std::vector<std::vector<double>> columns;  // one column per input series
};

// Per-series weekly maxima restricted to the weeks every series covers.
BlockMaxima componentwise_block_maxima(const std::vector<ReturnSeries>& series);

// Rank transform onto the unit Frechet scale: z_i = -1 / log(r_i / (m + 1))
// with average ranks on ties. Needs m >= 2.
std::vector<double> empirical_frechet_transform(const std::vector<double>& block_maxima);

// Interpolated empirical margin of one block-maxima sample, used to carry
// new points between the data scale and the Frechet scale.
class EmpiricalMargin {
 public:
  EmpiricalMargin() = default;
  explicit EmpiricalMargin(std::vector<double> sample);

  // Interpolated F(value), clamped to [1/(m+1), m/(m+1)]. extrapolated is
  // set when value falls outside the observed range.
  double cdf(double value, bool* extrapolated = nullptr) const;

  // Inverse of cdf by the same interpolation, clamped to the sample range.
  double quantile(double p, bool* extrapolated = nullptr) const;

  double to_frechet(double value, bool* extrapolated = nullptr) const;
  double from_frechet(double z, bool* extrapolated = nullptr) const;

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted_sample() const { return sorted_; }

  nlohmann::json to_json() const;
  static EmpiricalMargin from_json(const nlohmann::json& j);

 private:
  std::vector<double> sorted_;
};

void write_pairs_csv(const std::filesystem::path& path,
                     const std::vector<FrechetPair>& pairs);
std::vector<FrechetPair> read_pairs_csv(const std::filesystem::path& path);

// Sidecar describing how a pairs file was produced: block labels, margins,
// block and tie conventions.
struct TransformRecord {
  std::vector<std::string> labels;
  EmpiricalMargin margin_x;
  EmpiricalMargin margin_y;
  std::size_t dropped_x = 0;
  std::size_t dropped_y = 0;
};

nlohmann::json transform_record_to_json(const TransformRecord& rec);
TransformRecord transform_record_from_json(const nlohmann::json& j);

}  // namespace evreg
