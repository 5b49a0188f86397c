#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcnp/dates.hpp"
#include "dcnp/grid.hpp"
#include "dcnp/rng.hpp"

namespace dcnp::data {

enum class Variable { kTmax, kPrecip };

std::string variable_name(Variable v);
Variable variable_from_name(const std::string& s);

// Daily observations of one variable at one station.
struct StationRecord {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  double elev = 0.0;
  double elev_diff = 0.0;
  double mtpi = 0.0;
  std::vector<std::pair<Date, double>> series;  // sorted by date

  TargetSite site() const { return TargetSite{lon, lat, elev, elev_diff, mtpi}; }
};

// A dated sequence of predictor grids sharing axes and channel schema.
struct GridSeries {
  std::vector<Date> dates;
  std::vector<PredictorGrid> days;

  const std::vector<std::string>& channels() const { return days.front().channels; }
  int n_days() const { return static_cast<int>(days.size()); }
};

// Masked cells carry this sentinel on disk.
inline constexpr double kMaskSentinel = 9.969e36;

// Binary grid container. Dates with gaps are tolerated; gaps are surfaced
// through `gap_report`.
void save_grids(const std::filesystem::path& path, const GridSeries& gs);
GridSeries load_grids(const std::filesystem::path& path,
                      const std::vector<std::string>& expected_schema = {},
                      std::vector<std::string>* gap_report = nullptr);

// Station set: index CSV `stations.csv` plus one `<id>.csv` series per
// station.
void save_stations(const std::filesystem::path& dir, const std::vector<StationRecord>& stations);
std::vector<StationRecord> load_stations(const std::filesystem::path& dir);

// One cross-validation fold over complete calendar years.
struct FoldSpec {
  int fold_id = 1;  // 1..5
  std::vector<int> train_years;
  std::vector<int> test_years;
};

// Five folds over 30 consecutive years; fold k tests the k-th six-year
// window and trains on the rest.
std::vector<FoldSpec> make_folds(const std::vector<int>& years);

// Per-channel moments estimated from training days only.
struct StandardizationStats {
  std::vector<std::string> channels;
  std::vector<double> mean;
  std::vector<double> stddev;

  nlohmann::ordered_json to_json() const;
  static StandardizationStats from_json(const nlohmann::json& j);
  // Order-sensitive digest used by leakage checks.
  std::uint64_t fingerprint() const;
};

// Day-invariant channels (coordinates, orography) are estimated from a
// single day; the rest pool all unmasked train-day cells.
StandardizationStats compute_stats(const GridSeries& gs, const std::vector<int>& train_days,
                                   const std::set<std::string>& invariant_channels);
void standardize(GridSeries& gs, const StandardizationStats& stats);

// (cos, sin) of the calendar angle 2*pi*(day_of_year - 1)/365.25.
std::pair<double, double> encode_time(const Date& d);

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_days = 200;
  int n_stations = 40;
  int n_lat = 16;
  int n_lon = 16;
  double noise_sigma = 0.3;  // site-level temperature noise, degrees C
  Date start_date{2000, 1, 1};
};

// Deterministic synthetic world for desk-scale verification: smooth
// large-scale fields from random Fourier features, a lapse-rate temperature
// truth driven by sub-grid elevation differences, and humidity-gated gamma
// precipitation.
struct SynthWorld {
  GridSeries grids;
  std::vector<StationRecord> tmax_stations;
  std::vector<StationRecord> precip_stations;
};

SynthWorld synth_generate(const SynthConfig& cfg);

// Channel names emitted by synth_generate, in file order.
std::vector<std::string> synth_schema();

// Grids plus stations of one variable with observations aligned to the date
// axis.
struct Dataset {
  GridSeries grids;
  std::vector<StationRecord> stations;
  Variable variable = Variable::kTmax;
  double wet_threshold = 1.0;  // mm; wet means value > threshold
  // obs[station][day], empty when the station has no value that day.
  std::vector<std::vector<std::optional<double>>> obs;

  static Dataset build(GridSeries grids, std::vector<StationRecord> stations, Variable variable,
                       double wet_threshold = 1.0);
  int n_days() const { return grids.n_days(); }
  int n_stations() const { return static_cast<int>(stations.size()); }
};

}  // namespace dcnp::data
