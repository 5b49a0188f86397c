#include "dcnp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dcnp/baseline.hpp"
#include "dcnp/metrics.hpp"
#include "dcnp/trainer.hpp"

namespace dcnp::cli {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

struct LoadedData {
  data::Dataset ds;                  // raw grids
  data::StandardizationStats stats;  // from training days
  train::ExperimentSplit split;
};

train::ExperimentSplit make_split(const RunConfig& cfg, const data::Dataset& ds) {
  train::ExperimentSplit split;
  if (cfg.fold_id > 0) {
    std::set<int> year_set;
    for (const Date& d : ds.grids.dates) year_set.insert(d.year);
    const std::vector<int> years(year_set.begin(), year_set.end());
    const auto folds = data::make_folds(years);
    return train::split_for_fold(ds, folds[static_cast<std::size_t>(cfg.fold_id - 1)]);
  }
  const int n_days = ds.n_days();
  int cut = static_cast<int>(std::llround(cfg.train_day_fraction * n_days));
  cut = std::clamp(cut, 1, n_days);
  for (int d = 0; d < cut; ++d) split.train_days.push_back(d);
  for (int d = cut; d < n_days; ++d) split.test_days.push_back(d);
  if (split.test_days.empty()) split.test_days = split.train_days;

  const int n_st = ds.n_stations();
  const int n_train = cfg.n_train_stations > 0 ? std::min(cfg.n_train_stations, n_st) : n_st;
  for (int s = 0; s < n_train; ++s) split.train_stations.push_back(s);
  for (int s = n_train; s < n_st; ++s) split.test_stations.push_back(s);
  if (split.test_stations.empty()) split.test_stations = split.train_stations;
  return split;
}

LoadedData load_pipeline_data(const RunConfig& cfg, bool standardized) {
  std::vector<std::string> gaps;
  data::GridSeries grids = data::load_grids(cfg.grid_path, {}, &gaps);
  for (const std::string& g : gaps) std::cerr << "grid date gap: " << g << "\n";
  std::vector<data::StationRecord> stations = data::load_stations(cfg.stations_path);
  LoadedData out{data::Dataset::build(std::move(grids), std::move(stations), cfg.variable,
                                      cfg.wet_threshold),
                 {},
                 {}};
  out.split = make_split(cfg, out.ds);
  const std::set<std::string> invariant(cfg.invariant_channels.begin(),
                                        cfg.invariant_channels.end());
  out.stats = data::compute_stats(out.ds.grids, out.split.train_days, invariant);
  if (standardized) data::standardize(out.ds.grids, out.stats);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

// Prediction table: site_id,date,param...,det,sample_1..k,status.
std::string prediction_header(dist::Head head, int n_samples, bool with_params) {
  std::string h = "site_id,date";
  if (with_params) {
    h += ",param1,param2";
    if (dist::n_params(head) == 3) h += ",param3";
  }
  h += ",det";
  for (int k = 1; k <= n_samples; ++k) h += ",sample_" + std::to_string(k);
  h += ",status";
  return h;
}

std::string prediction_row(const std::string& id, const Date& date,
                           const dist::PredictiveParams* params, dist::Head head, double det,
                           const std::vector<double>& samples, const std::string& status,
                           int n_samples, bool with_params) {
  std::string row = id + "," + date_to_string(date);
  if (with_params) {
    if (params == nullptr) {
      row += std::string(",,") + (dist::n_params(head) == 3 ? "," : "");
    } else if (const auto* g = std::get_if<dist::GaussianParams>(params)) {
      row += "," + fmt(g->mu) + "," + fmt(g->sigma);
    } else {
      const auto& bg = std::get<dist::BernoulliGammaParams>(*params);
      row += "," + fmt(bg.rho) + "," + fmt(bg.alpha) + "," + fmt(bg.beta);
    }
  }
  row += params == nullptr && status != "ok" ? std::string(",") : "," + fmt(det);
  for (int k = 0; k < n_samples; ++k) {
    row += samples.empty() ? "," : "," + fmt(samples[static_cast<std::size_t>(k)]);
  }
  row += "," + status;
  return row;
}

nlohmann::ordered_json run_manifest_extra(const RunConfig& cfg,
                                          const data::StandardizationStats& stats) {
  nlohmann::ordered_json extra;
  extra["variable"] = data::variable_name(cfg.variable);
  extra["wet_threshold"] = cfg.wet_threshold;
  extra["det_mode"] =
      cfg.det_mode == dist::DetMode::kGatedMean ? "gated_mean" : "mixture_mean";
  if (cfg.fold_id > 0) {
    extra["fold_id"] = cfg.fold_id;
  } else {
    extra["fold_id"] = nullptr;
  }
  extra["standardization"] = stats.to_json();
  return extra;
}

}  // namespace

void cmd_synth(const RunConfig& cfg) {
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  const data::SynthWorld world = data::synth_generate(cfg.synth);
  data::save_grids(out / "grid.dcgr", world.grids);
  data::save_stations(out / "stations_tmax", world.tmax_stations);
  data::save_stations(out / "stations_precip", world.precip_stations);
  std::cout << "wrote " << world.grids.n_days() << " days, " << world.tmax_stations.size()
            << " stations to " << out.string() << "\n";
}

void cmd_train(const RunConfig& cfg) {
  LoadedData ld = load_pipeline_data(cfg, /*standardized=*/true);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  ConvCnp init(cfg.model, ld.ds.grids.channels(), cfg.train.seed);
  ConvCnp trained = init;  // replaced by run_experiment
  const train::RunResult result =
      train::run_experiment(init, ld.ds, ld.split, cfg.train, cfg.det_mode, &trained);

  trained.save(out / "checkpoint", run_manifest_extra(cfg, ld.stats));
  write_file(out / "train_log.csv", result.log.to_csv());

  std::ostringstream pred;
  pred << prediction_header(cfg.model.head, 1, true) << "\n";
  for (const train::StationPrediction& p : result.predictions) {
    for (std::size_t i = 0; i < p.dates.size(); ++i) {
      pred << prediction_row(p.station_id, p.dates[i], &p.params[i], cfg.model.head, p.det[i],
                             {p.sample[i]}, "ok", 1, true)
           << "\n";
    }
  }
  write_file(out / "predictions.csv", pred.str());
  std::cout << "trained " << result.log.stopped_epoch << " epochs (best "
            << result.log.best_epoch << ", val NLL " << fmt(result.log.best_val_nll)
            << "); outputs in " << out.string() << "\n";
}

namespace {

struct SiteRow {
  std::string id;
  TargetSite site;
};

std::vector<SiteRow> load_sites_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open sites file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw config_error("empty sites file: " + path.string());
  std::vector<SiteRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw config_error("bad sites row: " + line);
    SiteRow r;
    r.id = f[0];
    r.site = TargetSite{std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                        std::stod(f[5])};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void cmd_predict(const PredictArgs& args) {
  nlohmann::ordered_json manifest;
  const ConvCnp model = ConvCnp::load(args.checkpoint, &manifest);
  const auto stats = data::StandardizationStats::from_json(manifest.at("standardization"));
  const std::string det_name = manifest.value("det_mode", "gated_mean");
  const dist::DetMode det_mode =
      det_name == "mixture_mean" ? dist::DetMode::kMixtureMean : dist::DetMode::kGatedMean;

  data::GridSeries grids = data::load_grids(args.grid, model.channel_names());
  data::standardize(grids, stats);
  const std::vector<SiteRow> sites = load_sites_csv(args.sites);

  const std::uint64_t seed = args.seed.value_or(model.seed());
  Rng sample_rng = Rng(seed).fork(0x5A5A);

  std::ostringstream os;
  os << prediction_header(model.config().head, args.n_samples, true) << "\n";
  for (int d = 0; d < grids.n_days(); ++d) {
    const Date date = grids.dates[static_cast<std::size_t>(d)];
    if (args.date_from.has_value() && date < *args.date_from) continue;
    if (args.date_to.has_value() && *args.date_to < date) continue;
    const PredictorGrid& g = grids.days[static_cast<std::size_t>(d)];

    // Forward only the rows inside the bounding box; flagged rows keep the
    // run going.
    std::vector<TargetSite> ok_sites;
    std::vector<int> ok_rows;
    for (int r = 0; r < static_cast<int>(sites.size()); ++r) {
      if (g.contains(sites[static_cast<std::size_t>(r)].site.lon,
                     sites[static_cast<std::size_t>(r)].site.lat)) {
        ok_sites.push_back(sites[static_cast<std::size_t>(r)].site);
        ok_rows.push_back(r);
      }
    }
    std::vector<dist::PredictiveParams> params;
    if (!ok_sites.empty()) params = model.forward(g, ok_sites);
    std::vector<int> row_to_ok(sites.size(), -1);
    for (std::size_t k = 0; k < ok_rows.size(); ++k) {
      row_to_ok[static_cast<std::size_t>(ok_rows[k])] = static_cast<int>(k);
    }
    for (std::size_t r = 0; r < sites.size(); ++r) {
      const int k = row_to_ok[r];
      if (k < 0) {
        os << prediction_row(sites[r].id, date, nullptr, model.config().head, 0.0, {},
                             "out_of_bbox", args.n_samples, true)
           << "\n";
        continue;
      }
      std::vector<double> samples;
      for (int q = 0; q < args.n_samples; ++q) {
        samples.push_back(dist::sample(params[static_cast<std::size_t>(k)], sample_rng));
      }
      os << prediction_row(sites[r].id, date, &params[static_cast<std::size_t>(k)],
                           model.config().head, dist::det_value(params[static_cast<std::size_t>(k)], det_mode),
                           samples, "ok", args.n_samples, true)
         << "\n";
    }
  }
  write_file(args.out_file, os.str());
}

void cmd_baseline(const RunConfig& cfg) {
  LoadedData ld = load_pipeline_data(cfg, /*standardized=*/false);
  const data::Dataset& ds = ld.ds;
  const train::ExperimentSplit& split = ld.split;
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  // Per-station models at the closest grid box over the training days.
  struct FittedStation {
    int index;
    baseline::SitePoint point;
    baseline::StationRegressor mean_model;     // mlr or gamma glm
    baseline::StationRegressor occurrence;     // logistic (precipitation only)
  };
  std::vector<FittedStation> fitted;
  for (int s : split.train_stations) {
    const auto& st = ds.stations[static_cast<std::size_t>(s)];
    std::vector<int> days;
    std::vector<double> y;
    for (int d : split.train_days) {
      const auto& v = ds.obs[static_cast<std::size_t>(s)][static_cast<std::size_t>(d)];
      if (v.has_value()) {
        days.push_back(d);
        y.push_back(*v);
      }
    }
    if (days.size() < ds.grids.channels().size() + 2) continue;
    const Tensor X = baseline::closest_gridbox_features(ds.grids, st.lon, st.lat, days);
    FittedStation f;
    f.index = s;
    f.point = {st.lon, st.lat, st.elev};
    try {
      if (cfg.variable == data::Variable::kTmax) {
        f.mean_model = baseline::fit_mlr(X, y, ds.grids.channels());
      } else {
        std::vector<bool> wet(y.size());
        std::vector<double> wet_y;
        std::vector<int> wet_days;
        for (std::size_t i = 0; i < y.size(); ++i) {
          wet[i] = y[i] > cfg.wet_threshold;
          if (wet[i]) {
            wet_y.push_back(y[i]);
            wet_days.push_back(days[i]);
          }
        }
        f.occurrence = baseline::fit_logistic(X, wet, ds.grids.channels());
        if (wet_y.size() < ds.grids.channels().size() + 2) continue;
        const Tensor Xwet =
            baseline::closest_gridbox_features(ds.grids, st.lon, st.lat, wet_days);
        f.mean_model = baseline::fit_gamma_glm(Xwet, wet_y, ds.grids.channels());
      }
    } catch (const std::exception& e) {
      std::cerr << "baseline: skipping station " << st.id << ": " << e.what() << "\n";
      continue;
    }
    fitted.push_back(std::move(f));
  }
  if (fitted.size() < 5) {
    throw config_error("baseline: fewer than 5 usable contributing stations (" +
                       std::to_string(fitted.size()) + ")");
  }

  // Station predictions over the test days.
  const int C = static_cast<int>(ds.grids.channels().size());
  std::vector<std::vector<double>> station_pred(fitted.size());
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    const auto& st = ds.stations[static_cast<std::size_t>(fitted[k].index)];
    const Tensor X = baseline::closest_gridbox_features(ds.grids, st.lon, st.lat, split.test_days);
    station_pred[k].resize(split.test_days.size());
    for (std::size_t r = 0; r < split.test_days.size(); ++r) {
      std::vector<double> x(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c) x[static_cast<std::size_t>(c)] = X(static_cast<int>(r), c);
      if (cfg.variable == data::Variable::kTmax) {
        station_pred[k][r] = fitted[k].mean_model.predict(x);
      } else {
        const double p = fitted[k].occurrence.predict(x);
        station_pred[k][r] = p >= 0.5 ? fitted[k].mean_model.predict(x) : 0.0;
      }
    }
  }

  // Interpolate month by month to each evaluation target.
  std::vector<baseline::SitePoint> points;
  for (const FittedStation& f : fitted) points.push_back(f.point);
  baseline::GpHyper hyper = cfg.gp;

  std::vector<std::pair<int, int>> month_ranges;  // [first, last) into test_days
  {
    std::size_t i = 0;
    while (i < split.test_days.size()) {
      std::size_t j = i;
      const Date d0 = ds.grids.dates[static_cast<std::size_t>(split.test_days[i])];
      while (j < split.test_days.size()) {
        const Date dj = ds.grids.dates[static_cast<std::size_t>(split.test_days[j])];
        if (dj.year != d0.year || dj.month != d0.month) break;
        ++j;
      }
      month_ranges.emplace_back(static_cast<int>(i), static_cast<int>(j));
      i = j;
    }
  }

  std::ostringstream os;
  os << prediction_header(cfg.model.head, 0, false) << "\n";
  for (int s : split.test_stations) {
    const auto& st = ds.stations[static_cast<std::size_t>(s)];
    for (const auto& [first, last] : month_ranges) {
      std::vector<std::vector<double>> month_pred(fitted.size());
      for (std::size_t k = 0; k < fitted.size(); ++k) {
        month_pred[k].assign(station_pred[k].begin() + first, station_pred[k].begin() + last);
      }
      const std::vector<double> series = baseline::baseline_predict_unseen(
          points, month_pred, st.site(), cfg.variable, hyper, cfg.elev_scale);
      for (int r = first; r < last; ++r) {
        const Date date = ds.grids.dates[static_cast<std::size_t>(split.test_days[r])];
        os << st.id << "," << date_to_string(date) << ","
           << fmt(series[static_cast<std::size_t>(r - first)]) << ",ok\n";
      }
    }
  }
  write_file(out / "baseline_predictions.csv", os.str());
  std::cout << "baseline: " << fitted.size() << " contributing stations, predictions in "
            << (out / "baseline_predictions.csv").string() << "\n";
}

namespace {

struct PredictionFile {
  int n_params = 0;  // 0, 2 or 3
  bool has_samples = false;
  struct Row {
    Date date;
    std::optional<dist::PredictiveParams> params;
    double det = 0.0;
    std::optional<double> sample;
  };
  std::map<std::string, std::vector<Row>> by_station;
};

PredictionFile read_prediction_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open predictions file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw config_error("empty predictions file: " + path.string());
  const auto header = split_csv_line(line);
  PredictionFile pf;
  int det_col = -1, status_col = -1, sample_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "param1" || header[c] == "param2" || header[c] == "param3") ++pf.n_params;
    if (header[c] == "det") det_col = static_cast<int>(c);
    if (header[c] == "status") status_col = static_cast<int>(c);
    if (header[c] == "sample_1") sample_col = static_cast<int>(c);
  }
  if (header.size() < 3 || header[0] != "site_id" || header[1] != "date" || det_col < 0) {
    throw config_error("unrecognized prediction header in " + path.string());
  }
  pf.has_samples = sample_col >= 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw config_error("ragged prediction row: " + line);
    if (status_col >= 0 && f[static_cast<std::size_t>(status_col)] != "ok") continue;
    PredictionFile::Row row;
    row.date = parse_date(f[1]);
    if (pf.n_params == 2) {
      row.params = dist::GaussianParams{std::stod(f[2]), std::stod(f[3])};
    } else if (pf.n_params == 3) {
      row.params = dist::BernoulliGammaParams{std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    }
    row.det = std::stod(f[static_cast<std::size_t>(det_col)]);
    if (sample_col >= 0) row.sample = std::stod(f[static_cast<std::size_t>(sample_col)]);
    pf.by_station[f[0]].push_back(std::move(row));
  }
  return pf;
}

}  // namespace

void cmd_evaluate(const EvaluateArgs& args) {
  const PredictionFile pf = read_prediction_csv(args.predictions);
  const std::vector<data::StationRecord> stations = data::load_stations(args.stations);
  std::map<std::string, const data::StationRecord*> by_id;
  for (const auto& st : stations) by_id[st.id] = &st;

  data::Variable variable;
  if (args.variable.has_value()) {
    variable = *args.variable;
  } else if (pf.n_params == 3) {
    variable = data::Variable::kPrecip;
  } else {
    variable = data::Variable::kTmax;
  }

  metrics::MetricReport report;
  report.metric_names = metrics::metric_names_for(variable);
  std::vector<double> pits;
  std::vector<std::string> missing_stations;
  for (const auto& [id, rows] : pf.by_station) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing_stations.push_back(id);
      report.rows[id];  // present, all metrics missing
      continue;
    }
    std::map<long, double> obs;
    for (const auto& [date, value] : it->second->series) obs[days_from_civil(date)] = value;
    metrics::SiteSeries s;
    s.variable = variable;
    for (const auto& row : rows) {
      const auto ov = obs.find(days_from_civil(row.date));
      if (ov == obs.end()) continue;
      s.dates.push_back(row.date);
      s.observed.push_back(ov->second);
      double pred = args.use_sample && row.sample.has_value() ? *row.sample : row.det;
      if (variable == data::Variable::kPrecip && pred < 0.0) pred = 0.0;
      s.predicted.push_back(pred);
      if (row.params.has_value()) {
        if (variable == data::Variable::kTmax) {
          pits.push_back(dist::pit(*row.params, ov->second));
        } else if (ov->second > args.wet_threshold) {
          pits.push_back(dist::pit(*row.params, ov->second));
        }
      }
    }
    if (s.dates.empty()) {
      report.rows[id];
      continue;
    }
    report.rows[id] = metrics::station_metrics(s, args.wet_threshold);
  }
  if (!pits.empty()) report.pit = metrics::pit_summary(pits);

  const std::filesystem::path out(args.out_dir);
  std::filesystem::create_directories(out);
  write_file(out / "metrics.csv", report.to_csv());
  nlohmann::ordered_json summary = report.to_json();
  summary["stations"] = static_cast<int>(report.rows.size());
  if (!missing_stations.empty()) summary["missing_observations"] = missing_stations;
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "evaluated " << report.rows.size() << " stations; reports in " << out.string()
            << "\n";
}

void cmd_ablate(const RunConfig& cfg) {
  LoadedData ld = load_pipeline_data(cfg, /*standardized=*/true);
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  const auto results =
      train::run_ablation(cfg.model, ld.ds.grids.channels(), cfg.train.seed, ld.ds, ld.split,
                          cfg.train, cfg.det_mode, cfg.max_threads);

  nlohmann::ordered_json combined;
  for (const TopoMode mode :
       {TopoMode::kAll, TopoMode::kElevation, TopoMode::kMtpi, TopoMode::kNone}) {
    const train::RunResult& r = results.at(mode);
    metrics::MetricReport report;
    report.metric_names = metrics::metric_names_for(cfg.variable);
    std::vector<double> pits = train::pit_values(r.predictions, cfg.variable, cfg.wet_threshold);
    for (const train::StationPrediction& p : r.predictions) {
      const metrics::SiteSeries s = train::to_series(p, cfg.variable);
      if (s.dates.empty()) {
        report.rows[p.station_id];
        continue;
      }
      report.rows[p.station_id] = metrics::station_metrics(s, cfg.wet_threshold);
    }
    if (!pits.empty()) report.pit = metrics::pit_summary(pits);
    const std::string arm = topo_mode_name(mode);
    write_file(out / ("metrics_" + arm + ".csv"), report.to_csv());
    combined[arm] = report.to_json();
  }
  write_file(out / "ablation.json", combined.dump(2) + "\n");
  std::cout << "ablation arms written to " << out.string() << "\n";
}

}  // namespace dcnp::cli
