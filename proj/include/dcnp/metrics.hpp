#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcnp/data.hpp"
#include "dcnp/dates.hpp"

namespace dcnp::metrics {

// Paired observed/predicted daily values at one station.
struct SiteSeries {
  std::vector<Date> dates;  // strictly increasing
  std::vector<double> observed;
  std::vector<double> predicted;
  data::Variable variable = data::Variable::kTmax;

  void validate() const;
  std::size_t size() const { return dates.size(); }
};

inline constexpr double kWetThreshold = 1.0;  // mm, shared with training

// Metrics with an empty denominator (or otherwise undefined) report missing
// instead of propagating NaN.
std::optional<double> mae(const SiteSeries& s);
std::optional<double> mean_bias(const SiteSeries& s);
// Pearson correlation of average ranks; ties get the average rank. Missing
// when either series is constant or shorter than 3.
std::optional<double> spearman(const SiteSeries& s);
// Wet-day frequency ratio (#pred > thr) / (#obs > thr).
std::optional<double> r01(const SiteSeries& s, double threshold = kWetThreshold);
struct SdiiResult {
  std::optional<double> predicted;
  std::optional<double> observed;
};
SdiiResult sdii(const SiteSeries& s, double threshold = kWetThreshold);
// 98th-percentile bias; for precipitation the quantile is taken over wet
// days unless wet_days_only is cleared.
std::optional<double> p98_bias(const SiteSeries& s, bool wet_days_only = true,
                               double threshold = kWetThreshold);
std::optional<double> r10(const SiteSeries& s);

// Linear interpolation between closest order statistics (the common type-7
// rule). q in [0, 1].
double quantile_type7(std::vector<double> values, double q);

struct PitSummary {
  std::array<int, 20> histogram{};
  double ks = 0.0;  // Kolmogorov-Smirnov distance to the uniform law
  int n = 0;
};
PitSummary pit_summary(const std::vector<double>& pits);
double ks_uniform(std::vector<double> values);

// One named value per station per metric plus quartile summaries.
struct MetricReport {
  std::vector<std::string> metric_names;
  // rows[station_id][metric] (missing entries absent).
  std::map<std::string, std::map<std::string, double>> rows;
  std::optional<PitSummary> pit;

  struct Quartiles {
    double q1 = 0.0, median = 0.0, q3 = 0.0;
    int count = 0;
  };
  std::map<std::string, Quartiles> summary() const;

  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

// Computes the full metric set for one station series.
std::map<std::string, double> station_metrics(const SiteSeries& s,
                                              double wet_threshold = kWetThreshold);
std::vector<std::string> metric_names_for(data::Variable v);

}  // namespace dcnp::metrics
