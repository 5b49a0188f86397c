#include "dcnp/config.hpp"

#include <cstdlib>
#include <fstream>

namespace dcnp {

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.variable = data::variable_from_name(j.value("variable", "tmax"));
    c.wet_threshold = j.value("wet_threshold", c.wet_threshold);
    const std::string det = j.value("det_mode", "gated_mean");
    if (det == "gated_mean") {
      c.det_mode = dist::DetMode::kGatedMean;
    } else if (det == "mixture_mean") {
      c.det_mode = dist::DetMode::kMixtureMean;
    } else {
      throw config_error("unknown det_mode: " + det);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.grid_path = p.value("grid", c.grid_path);
      c.stations_path = p.value("stations", c.stations_path);
      c.out_dir = p.value("out", c.out_dir);
    }
    c.invariant_channels = j.value("invariant_channels", c.invariant_channels);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("model") && j.at("model").contains("head")) {
      const bool gaussian = c.model.head == dist::Head::kGaussian;
      if (gaussian != (c.variable == data::Variable::kTmax)) {
        throw config_error("model head conflicts with the configured variable");
      }
    }
    c.model.head =
        c.variable == data::Variable::kTmax ? dist::Head::kGaussian : dist::Head::kBernoulliGamma;
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.lr = t.value("lr", c.train.lr);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batches_per_epoch = t.value("batches_per_epoch", c.train.batches_per_epoch);
      c.train.days_per_batch = t.value("days_per_batch", c.train.days_per_batch);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.val_fraction = t.value("val_fraction", c.train.val_fraction);
    }
    c.fold_id = j.value("fold", c.fold_id);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.train_day_fraction = s.value("train_day_fraction", c.train_day_fraction);
      c.n_train_stations = s.value("n_train_stations", c.n_train_stations);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      c.synth.seed = s.value("seed", c.synth.seed);
      c.synth.n_days = s.value("n_days", c.synth.n_days);
      c.synth.n_stations = s.value("n_stations", c.synth.n_stations);
      c.synth.n_lat = s.value("n_lat", c.synth.n_lat);
      c.synth.n_lon = s.value("n_lon", c.synth.n_lon);
      c.synth.noise_sigma = s.value("noise_sigma", c.synth.noise_sigma);
      if (s.contains("start_date")) {
        c.synth.start_date = parse_date(s.at("start_date").get<std::string>());
      }
    }
    if (j.contains("baseline")) {
      const auto& b = j.at("baseline");
      c.elev_scale = b.value("elev_scale", c.elev_scale);
      if (b.contains("gp")) {
        const auto& g = b.at("gp");
        c.gp.l_lon = g.value("l_lon", c.gp.l_lon);
        c.gp.l_lat = g.value("l_lat", c.gp.l_lat);
        c.gp.l_elev = g.value("l_elev", c.gp.l_elev);
        c.gp.signal_var = g.value("signal_var", c.gp.signal_var);
        c.gp.noise = g.value("noise", c.gp.noise);
      }
    }
    c.n_samples = j.value("n_samples", c.n_samples);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad configuration document: ") + e.what());
  }
  if (const char* env = std::getenv("DCNP_THREADS")) {
    const int n = std::atoi(env);
    c.max_threads = n > 0 ? n : 1;
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (wet_threshold < 0.0) throw config_error("wet_threshold must be >= 0");
  if (fold_id < 0 || fold_id > 5) throw config_error("fold must be between 0 and 5");
  if (train_day_fraction <= 0.0 || train_day_fraction > 1.0) {
    throw config_error("split.train_day_fraction must be in (0, 1]");
  }
  if (n_train_stations < 0) throw config_error("split.n_train_stations must be >= 0");
  if (synth.n_stations <= 0) throw config_error("synth.n_stations must be positive");
  if (synth.n_days <= 0) throw config_error("synth.n_days must be positive");
  if (n_samples < 0) throw config_error("n_samples must be >= 0");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("cannot parse config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed.has_value()) {
    cfg.train.seed = *o.seed;
    cfg.synth.seed = *o.seed;
  }
  if (o.fold.has_value()) cfg.fold_id = *o.fold;
  if (o.head.has_value()) {
    if (*o.head == "gaussian") {
      cfg.variable = data::Variable::kTmax;
      cfg.model.head = dist::Head::kGaussian;
    } else if (*o.head == "bg" || *o.head == "bernoulli_gamma") {
      cfg.variable = data::Variable::kPrecip;
      cfg.model.head = dist::Head::kBernoulliGamma;
    } else {
      throw config_error("unknown head override: " + *o.head);
    }
  }
  if (o.topo.has_value()) {
    try {
      cfg.model.topo_mode = topo_mode_from_name(*o.topo);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }
  if (o.out.has_value()) cfg.out_dir = *o.out;
  cfg.validate();
}

}  // namespace dcnp
