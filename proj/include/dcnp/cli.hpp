#pragma once

#include <optional>
#include <string>

#include "dcnp/config.hpp"
#include "dcnp/dates.hpp"

namespace dcnp::cli {

// Writes the synthetic world (grid container plus both station sets) under
// cfg.out_dir.
void cmd_synth(const RunConfig& cfg);

// Trains one model on the configured split and writes checkpoint/,
// train_log.csv and predictions.csv under cfg.out_dir.
void cmd_train(const RunConfig& cfg);

struct PredictArgs {
  std::string checkpoint;
  std::string grid;
  std::string sites;
  std::string out_file;
  std::optional<Date> date_from;
  std::optional<Date> date_to;
  int n_samples = 1;
  std::optional<std::uint64_t> seed;
};

// Predictions at arbitrary sites; rows whose site falls outside the grid
// bounding box are flagged and the run continues.
void cmd_predict(const PredictArgs& args);

// Per-station regressions interpolated to the held-out targets; writes
// baseline_predictions.csv under cfg.out_dir.
void cmd_baseline(const RunConfig& cfg);

struct EvaluateArgs {
  std::string predictions;
  std::string stations;
  std::string out_dir;
  bool use_sample = false;
  double wet_threshold = 1.0;
  std::optional<data::Variable> variable;  // defaults to the head implied by the file
};

// Metric report (CSV + JSON summary, including PIT calibration when the
// prediction file carries distribution parameters).
void cmd_evaluate(const EvaluateArgs& args);

// Four topography arms trained on the shared split; per-arm reports plus a
// combined summary.
void cmd_ablate(const RunConfig& cfg);

}  // namespace dcnp::cli
