#include "dcnp/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace dcnp::train {

void TrainConfig::validate() const {
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (epochs <= 0 || batches_per_epoch <= 0 || days_per_batch <= 0 || patience <= 0) {
    throw std::invalid_argument("TrainConfig: counts must be positive");
  }
  if (patience > epochs) throw std::invalid_argument("TrainConfig: patience exceeds epochs");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw std::invalid_argument("TrainConfig: val_fraction must be in [0, 1)");
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_nll,val_nll\n";
  char buf[64];
  for (const EpochStats& e : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train_nll, e.val_nll);
    os << buf;
  }
  return os.str();
}

DayTargets targets_for_day(const data::Dataset& ds, int day,
                           std::span<const int> station_subset) {
  DayTargets t;
  auto add_station = [&](int s) {
    const auto& v = ds.obs[static_cast<std::size_t>(s)][static_cast<std::size_t>(day)];
    if (!v.has_value()) return;
    t.sites.push_back(ds.stations[static_cast<std::size_t>(s)].site());
    t.y.push_back(*v);
    t.wet.push_back(ds.variable == data::Variable::kPrecip && *v > ds.wet_threshold);
    t.station_index.push_back(s);
  };
  if (station_subset.empty()) {
    for (int s = 0; s < ds.n_stations(); ++s) add_station(s);
  } else {
    for (int s : station_subset) add_station(s);
  }
  return t;
}

std::vector<int> assemble_batch(std::span<const int> train_days, Rng& rng, int days_per_batch) {
  if (train_days.empty()) throw std::invalid_argument("assemble_batch: empty training pool");
  std::vector<int> days;
  days.reserve(static_cast<std::size_t>(days_per_batch));
  for (int i = 0; i < days_per_batch; ++i) {
    days.push_back(train_days[static_cast<std::size_t>(rng.integer(train_days.size()))]);
  }
  return days;
}

Var batch_nll(const ConvCnp& model, const data::Dataset& ds, std::span<const int> days,
              std::span<const int> station_subset) {
  const dist::Head head = model.config().head;
  if ((head == dist::Head::kGaussian) != (ds.variable == data::Variable::kTmax)) {
    throw std::invalid_argument("batch_nll: model head does not match the dataset variable");
  }
  Var total;
  long n_points = 0;
  for (int d : days) {
    const DayTargets t = targets_for_day(ds, d, station_subset);
    if (t.sites.empty()) continue;
    const Var linked = model.site_params(ds.grids.days[static_cast<std::size_t>(d)], t.sites);
    const Var day_nll = dist::nll_sum(linked, head, t.y, t.wet);
    total = total.defined() ? add(total, day_nll) : day_nll;
    n_points += static_cast<long>(t.sites.size());
  }
  if (n_points == 0) throw std::invalid_argument("batch_nll: no targets in the given days");
  return scale(total, 1.0 / static_cast<double>(n_points));
}

double eval_nll(const ConvCnp& model, const data::Dataset& ds, std::span<const int> days,
                std::span<const int> station_subset) {
  return scalar_value(batch_nll(model, ds, days, station_subset));
}

TrainLog train(ConvCnp& model, const data::Dataset& ds, std::span<const int> train_days,
               const TrainConfig& cfg, std::span<const int> station_subset,
               const EpochCallback& on_epoch_end) {
  cfg.validate();
  if (train_days.empty()) throw std::invalid_argument("train: no training days");

  // Day-wise validation split of the training pool, seeded by the run seed.
  Rng master(cfg.seed);
  std::vector<int> pool(train_days.begin(), train_days.end());
  {
    Rng shuffle_rng = master.fork(0);
    for (std::size_t i = pool.size(); i > 1; --i) {
      std::swap(pool[i - 1], pool[static_cast<std::size_t>(shuffle_rng.integer(i))]);
    }
  }
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(cfg.val_fraction * static_cast<double>(pool.size())));
  if (n_val == 0 && pool.size() >= 2 && cfg.val_fraction > 0.0) n_val = 1;
  if (n_val >= pool.size()) n_val = pool.size() - 1;
  std::vector<int> val_days(pool.begin(), pool.begin() + static_cast<long>(n_val));
  std::vector<int> fit_days(pool.begin() + static_cast<long>(n_val), pool.end());
  std::sort(val_days.begin(), val_days.end());
  std::sort(fit_days.begin(), fit_days.end());
  const std::span<const int> monitor_days = val_days.empty() ? fit_days : val_days;

  AdamState opt;
  opt.lr = cfg.lr;
  auto params = model.parameters();

  Rng batch_rng = master.fork(1);
  TrainLog log;
  log.best_val_nll = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_snapshot = model.snapshot_values();
  int no_improvement = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double epoch_nll = 0.0;
    for (int b = 1; b <= cfg.batches_per_epoch; ++b) {
      const std::vector<int> days = assemble_batch(fit_days, batch_rng, cfg.days_per_batch);
      try {
        const Var loss = batch_nll(model, ds, days, station_subset);
        epoch_nll += scalar_value(loss);
        backward(loss);
        adam_step(opt, params);
      } catch (const numeric_error& e) {
        throw numeric_error("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ": " + e.what());
      }
    }
    epoch_nll /= cfg.batches_per_epoch;
    const double val_nll = eval_nll(model, ds, monitor_days, station_subset);

    EpochStats st;
    st.epoch = epoch;
    st.train_nll = epoch_nll;
    st.val_nll = val_nll;
    st.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(st);
    log.stopped_epoch = epoch;

    if (val_nll < log.best_val_nll) {
      log.best_val_nll = val_nll;
      log.best_epoch = epoch;
      best_snapshot = model.snapshot_values();
      no_improvement = 0;
    } else {
      ++no_improvement;
    }
    if (on_epoch_end) on_epoch_end(epoch, opt);
    if (no_improvement >= cfg.patience) break;
  }
  model.restore_values(best_snapshot);
  return log;
}

metrics::SiteSeries to_series(const StationPrediction& p, data::Variable variable,
                              bool use_sample) {
  metrics::SiteSeries s;
  s.variable = variable;
  for (std::size_t i = 0; i < p.dates.size(); ++i) {
    if (!p.observed[i].has_value()) continue;
    s.dates.push_back(p.dates[i]);
    s.observed.push_back(*p.observed[i]);
    s.predicted.push_back(use_sample ? p.sample[i] : p.det[i]);
  }
  return s;
}

std::vector<double> pit_values(const std::vector<StationPrediction>& preds,
                               data::Variable variable, double wet_threshold) {
  std::vector<double> pits;
  for (const StationPrediction& p : preds) {
    for (std::size_t i = 0; i < p.dates.size(); ++i) {
      if (!p.observed[i].has_value()) continue;
      const double y = *p.observed[i];
      if (variable == data::Variable::kPrecip && y <= wet_threshold) continue;
      pits.push_back(dist::pit(p.params[i], y));
    }
  }
  return pits;
}

RunResult run_experiment(const ConvCnp& init_model, const data::Dataset& ds,
                         const ExperimentSplit& split, const TrainConfig& cfg,
                         dist::DetMode det_mode, ConvCnp* trained_out) {
  ConvCnp model(init_model.config(), init_model.channel_names(), init_model.seed());
  // Start from the caller's weights so repeated runs share initialization.
  model.restore_values(init_model.snapshot_values());

  RunResult out;
  out.log = train(model, ds, split.train_days, cfg, split.train_stations);

  std::vector<TargetSite> sites;
  for (int s : split.test_stations) {
    sites.push_back(ds.stations[static_cast<std::size_t>(s)].site());
  }
  out.predictions.resize(split.test_stations.size());
  for (std::size_t k = 0; k < split.test_stations.size(); ++k) {
    const auto& st = ds.stations[static_cast<std::size_t>(split.test_stations[k])];
    out.predictions[k].station_id = st.id;
    out.predictions[k].site = st.site();
  }

  Rng sample_rng = Rng(cfg.seed).fork(0x5A5A);
  for (int d : split.test_days) {
    const auto params = model.forward(ds.grids.days[static_cast<std::size_t>(d)], sites);
    for (std::size_t k = 0; k < sites.size(); ++k) {
      StationPrediction& p = out.predictions[k];
      p.dates.push_back(ds.grids.dates[static_cast<std::size_t>(d)]);
      p.observed.push_back(
          ds.obs[static_cast<std::size_t>(split.test_stations[k])][static_cast<std::size_t>(d)]);
      p.params.push_back(params[k]);
      p.det.push_back(dist::det_value(params[k], det_mode));
      p.sample.push_back(dist::sample(params[k], sample_rng));
    }
  }
  out.final_params = model.snapshot_values();
  if (trained_out) *trained_out = std::move(model);
  return out;
}

ExperimentSplit split_for_fold(const data::Dataset& ds, const data::FoldSpec& fold) {
  ExperimentSplit split;
  auto in = [](const std::vector<int>& years, int y) {
    return std::find(years.begin(), years.end(), y) != years.end();
  };
  for (int d = 0; d < ds.n_days(); ++d) {
    const int y = ds.grids.dates[static_cast<std::size_t>(d)].year;
    if (in(fold.train_years, y)) split.train_days.push_back(d);
    if (in(fold.test_years, y)) split.test_days.push_back(d);
  }
  for (int s = 0; s < ds.n_stations(); ++s) {
    split.train_stations.push_back(s);
    split.test_stations.push_back(s);
  }
  return split;
}

RunResult run_fold(const ConvCnp& init_model, const data::Dataset& ds, const data::FoldSpec& fold,
                   const TrainConfig& cfg, dist::DetMode det_mode, ConvCnp* trained_out) {
  const ExperimentSplit split = split_for_fold(ds, fold);
  if (split.train_days.empty() || split.test_days.empty()) {
    throw std::invalid_argument("run_fold: fold years not covered by the dataset");
  }
  return run_experiment(init_model, ds, split, cfg, det_mode, trained_out);
}

std::map<TopoMode, RunResult> run_ablation(const ModelConfig& cfg,
                                           const std::vector<std::string>& channels,
                                           std::uint64_t model_seed, const data::Dataset& ds,
                                           const ExperimentSplit& split, const TrainConfig& tcfg,
                                           dist::DetMode det_mode, int max_threads) {
  const TopoMode arms[4] = {TopoMode::kAll, TopoMode::kElevation, TopoMode::kMtpi,
                            TopoMode::kNone};
  std::map<TopoMode, RunResult> results;
  std::vector<std::pair<TopoMode, RunResult>> slots(4);

  auto run_arm = [&](int i) {
    ModelConfig arm_cfg = cfg;
    arm_cfg.topo_mode = arms[i];
    ConvCnp model(arm_cfg, channels, model_seed);
    slots[static_cast<std::size_t>(i)] = {arms[i],
                                          run_experiment(model, ds, split, tcfg, det_mode)};
  };

  if (max_threads <= 1) {
    for (int i = 0; i < 4; ++i) run_arm(i);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    const int n_workers = std::min(max_threads, 4);
    for (int w = 0; w < n_workers; ++w) {
      workers.emplace_back([&]() {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= 4) return;
          run_arm(i);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& [mode, result] : slots) results[mode] = std::move(result);
  return results;
}

}  // namespace dcnp::train
