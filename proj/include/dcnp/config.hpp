#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcnp/baseline.hpp"
#include "dcnp/convcnp.hpp"
#include "dcnp/data.hpp"
#include "dcnp/trainer.hpp"

namespace dcnp {

// Raised for malformed configuration or CLI arguments; maps to exit code 1.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// One JSON document drives every pipeline command.
struct RunConfig {
  data::Variable variable = data::Variable::kTmax;
  double wet_threshold = 1.0;
  dist::DetMode det_mode = dist::DetMode::kGatedMean;

  std::string grid_path = "grid.dcgr";
  std::string stations_path = "stations_tmax";
  std::string out_dir = "out";

  std::vector<std::string> invariant_channels = {"orog", "lat", "lon"};

  ModelConfig model;
  train::TrainConfig train;

  // fold_id > 0 selects the year-based protocol; otherwise the day/station
  // split below applies.
  int fold_id = 0;
  double train_day_fraction = 0.8;
  int n_train_stations = 0;  // 0: all stations train and all are evaluated

  data::SynthConfig synth;

  baseline::GpHyper gp;
  double elev_scale = 1000.0;

  int n_samples = 1;
  int max_threads = 1;

  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);

// Flag overrides shared by the subcommands.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> fold;
  std::optional<std::string> head;
  std::optional<std::string> topo;
  std::optional<std::string> out;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

}  // namespace dcnp
