#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcnp/adam.hpp"
#include "dcnp/convcnp.hpp"
#include "dcnp/data.hpp"
#include "dcnp/metrics.hpp"

namespace dcnp::train {

struct TrainConfig {
  double lr = 5e-4;
  int epochs = 100;
  int batches_per_epoch = 456;
  int days_per_batch = 16;
  int patience = 10;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;  // share of training days monitored for early stopping

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_nll = 0.0;
  double val_nll = 0.0;
  double wall_seconds = 0.0;  // in-memory only; kept out of the CSV log
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;
  double best_val_nll = 0.0;

  std::string to_csv() const;
};

// Targets for one grid day: every station with a valid observation.
struct DayTargets {
  std::vector<TargetSite> sites;
  std::vector<double> y;
  std::vector<bool> wet;
  std::vector<int> station_index;
};

DayTargets targets_for_day(const data::Dataset& ds, int day,
                           std::span<const int> station_subset = {});

// Days drawn uniformly with replacement from the training pool.
std::vector<int> assemble_batch(std::span<const int> train_days, Rng& rng, int days_per_batch);

// Mean negative log-likelihood over every target point of the given days.
Var batch_nll(const ConvCnp& model, const data::Dataset& ds, std::span<const int> days,
              std::span<const int> station_subset = {});
double eval_nll(const ConvCnp& model, const data::Dataset& ds, std::span<const int> days,
                std::span<const int> station_subset = {});

// Invoked after each epoch; may adjust the optimizer (used by tests to pin
// the learning rate mid-run).
using EpochCallback = std::function<void(int epoch, AdamState& optimizer)>;

// Full optimization loop: batched NLL descent with Adam, a held-out
// validation split of the training days, early stopping on validation NLL,
// and restoration of the best-validation parameters.
TrainLog train(ConvCnp& model, const data::Dataset& ds, std::span<const int> train_days,
               const TrainConfig& cfg, std::span<const int> station_subset = {},
               const EpochCallback& on_epoch_end = {});

// Test-period predictions at one station.
struct StationPrediction {
  std::string station_id;
  TargetSite site;
  std::vector<Date> dates;
  std::vector<std::optional<double>> observed;
  std::vector<dist::PredictiveParams> params;
  std::vector<double> det;     // deterministic series
  std::vector<double> sample;  // one stochastic draw per day
};

metrics::SiteSeries to_series(const StationPrediction& p, data::Variable variable,
                              bool use_sample = false);
// Predictive-CDF values at the observations; for precipitation only
// observed-wet days enter, through the gamma component.
std::vector<double> pit_values(const std::vector<StationPrediction>& preds,
                               data::Variable variable, double wet_threshold);

struct ExperimentSplit {
  std::vector<int> train_days;
  std::vector<int> test_days;
  std::vector<int> train_stations;
  std::vector<int> test_stations;
};

struct RunResult {
  TrainLog log;
  std::vector<StationPrediction> predictions;
  std::vector<Tensor> final_params;  // snapshot of the trained model
};

// Trains on the split's train days/stations and emits deterministic and
// sampled series at the test stations over the test days.
RunResult run_experiment(const ConvCnp& init_model, const data::Dataset& ds,
                         const ExperimentSplit& split, const TrainConfig& cfg,
                         dist::DetMode det_mode, ConvCnp* trained_out = nullptr);

// Year-based cross-validation protocol: the split is derived from the fold's
// train/test years; every station is both a training and an evaluation
// target.
RunResult run_fold(const ConvCnp& init_model, const data::Dataset& ds, const data::FoldSpec& fold,
                   const TrainConfig& cfg, dist::DetMode det_mode, ConvCnp* trained_out = nullptr);

ExperimentSplit split_for_fold(const data::Dataset& ds, const data::FoldSpec& fold);

// One run per topography arm, sharing seed, split and architecture.
std::map<TopoMode, RunResult> run_ablation(const ModelConfig& cfg,
                                           const std::vector<std::string>& channels,
                                           std::uint64_t model_seed, const data::Dataset& ds,
                                           const ExperimentSplit& split, const TrainConfig& tcfg,
                                           dist::DetMode det_mode, int max_threads = 1);

}  // namespace dcnp::train
