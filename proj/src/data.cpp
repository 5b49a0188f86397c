#include "dcnp/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dcnp::data {

std::string variable_name(Variable v) { return v == Variable::kTmax ? "tmax" : "precip"; }

Variable variable_from_name(const std::string& s) {
  if (s == "tmax") return Variable::kTmax;
  if (s == "precip") return Variable::kPrecip;
  throw std::invalid_argument("unknown variable: " + s);
}

namespace {

constexpr char kGridMagic[4] = {'D', 'C', 'G', 'R'};
constexpr std::uint32_t kGridVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, const std::string& path, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    std::ostringstream msg;
    msg << "grid file " << path << " truncated at byte " << is.tellg() << " while reading "
        << what;
    throw std::runtime_error(msg.str());
  }
  return v;
}

void write_f64(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_f64(std::istream& is, double* p, std::size_t n, const std::string& path) {
  if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw std::runtime_error("grid file truncated: " + path);
  }
}

}  // namespace

void save_grids(const std::filesystem::path& path, const GridSeries& gs) {
  if (gs.days.empty()) throw std::invalid_argument("save_grids: empty series");
  if (gs.dates.size() != gs.days.size()) {
    throw std::invalid_argument("save_grids: date/day count mismatch");
  }
  const PredictorGrid& g0 = gs.days.front();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open grid file for writing: " + path.string());
  os.write(kGridMagic, 4);
  write_u32(os, kGridVersion);
  write_u32(os, static_cast<std::uint32_t>(gs.days.size()));
  write_u32(os, static_cast<std::uint32_t>(g0.n_lat()));
  write_u32(os, static_cast<std::uint32_t>(g0.n_lon()));
  write_u32(os, static_cast<std::uint32_t>(g0.n_channels()));
  for (const std::string& name : g0.channels) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  write_f64(os, g0.lats.data(), g0.lats.size());
  write_f64(os, g0.lons.data(), g0.lons.size());
  const int cells = g0.n_lat() * g0.n_lon();
  std::vector<double> plane(static_cast<std::size_t>(cells));
  for (std::size_t d = 0; d < gs.days.size(); ++d) {
    const PredictorGrid& g = gs.days[d];
    if (g.channels != g0.channels || g.lats != g0.lats || g.lons != g0.lons) {
      throw std::invalid_argument("save_grids: day " + std::to_string(d) +
                                  " does not share the series schema/axes");
    }
    write_u32(os, date_to_int(gs.dates[d]));
    for (int c = 0; c < g.n_channels(); ++c) {
      for (int i = 0; i < g.n_lat(); ++i)
        for (int j = 0; j < g.n_lon(); ++j) {
          plane[static_cast<std::size_t>(i * g.n_lon() + j)] =
              g.mask(i, j, c) == 0.0 ? kMaskSentinel : g.values(i, j, c);
        }
      write_f64(os, plane.data(), plane.size());
    }
  }
  if (!os) throw std::runtime_error("grid write failed: " + path.string());
}

GridSeries load_grids(const std::filesystem::path& path,
                      const std::vector<std::string>& expected_schema,
                      std::vector<std::string>* gap_report) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open grid file: " + path.string());
  const std::string p = path.string();
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kGridMagic, 4) != 0) {
    throw std::runtime_error("bad grid file magic at byte 0 in " + p);
  }
  const std::uint32_t version = read_u32(is, p, "version");
  if (version != kGridVersion) throw std::runtime_error("unsupported grid file version in " + p);
  const std::uint32_t n_days = read_u32(is, p, "n_days");
  const std::uint32_t n_lat = read_u32(is, p, "n_lat");
  const std::uint32_t n_lon = read_u32(is, p, "n_lon");
  const std::uint32_t n_ch = read_u32(is, p, "n_channels");
  if (n_days == 0 || n_lat < 2 || n_lon < 2 || n_ch == 0 || n_lat > 100000 || n_lon > 100000) {
    throw std::runtime_error("implausible grid header in " + p);
  }
  std::vector<std::string> channels;
  for (std::uint32_t c = 0; c < n_ch; ++c) {
    const std::uint32_t len = read_u32(is, p, "channel name length");
    if (len > 4096) throw std::runtime_error("implausible channel name length in " + p);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) {
      throw std::runtime_error("grid file truncated in channel table: " + p);
    }
    channels.push_back(std::move(name));
  }
  if (!expected_schema.empty()) {
    for (const std::string& name : channels) {
      if (std::find(expected_schema.begin(), expected_schema.end(), name) ==
          expected_schema.end()) {
        throw std::runtime_error("grid file " + p + " contains unknown channel '" + name + "'");
      }
    }
    if (channels != expected_schema) {
      throw std::runtime_error("grid file " + p + " channel order does not match the schema");
    }
  }
  std::vector<double> lats(n_lat), lons(n_lon);
  read_f64(is, lats.data(), lats.size(), p);
  read_f64(is, lons.data(), lons.size(), p);

  GridSeries gs;
  const int cells = static_cast<int>(n_lat * n_lon);
  std::vector<double> plane(static_cast<std::size_t>(cells));
  for (std::uint32_t d = 0; d < n_days; ++d) {
    const Date date = date_from_int(read_u32(is, p, "day date"));
    PredictorGrid g;
    g.lats = lats;
    g.lons = lons;
    g.channels = channels;
    g.values = Tensor({static_cast<int>(n_lat), static_cast<int>(n_lon), static_cast<int>(n_ch)});
    g.mask = Tensor(g.values.shape());
    for (std::uint32_t c = 0; c < n_ch; ++c) {
      read_f64(is, plane.data(), plane.size(), p);
      for (std::uint32_t i = 0; i < n_lat; ++i)
        for (std::uint32_t j = 0; j < n_lon; ++j) {
          const double v = plane[i * n_lon + j];
          const int ic = static_cast<int>(i), jc = static_cast<int>(j), cc = static_cast<int>(c);
          if (v == kMaskSentinel) {
            g.mask(ic, jc, cc) = 0.0;
            g.values(ic, jc, cc) = 0.0;
          } else {
            g.mask(ic, jc, cc) = 1.0;
            g.values(ic, jc, cc) = v;
          }
        }
    }
    g.validate();
    if (!gs.dates.empty()) {
      const long gap = days_from_civil(date) - days_from_civil(gs.dates.back());
      if (gap <= 0) throw std::runtime_error("grid file dates not increasing in " + p);
      if (gap > 1 && gap_report) {
        gap_report->push_back("gap of " + std::to_string(gap - 1) + " day(s) after " +
                              date_to_string(gs.dates.back()));
      }
    }
    gs.dates.push_back(date);
    gs.days.push_back(std::move(g));
  }
  return gs;
}

namespace {

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

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_stations(const std::filesystem::path& dir, const std::vector<StationRecord>& stations) {
  std::filesystem::create_directories(dir);
  std::ofstream idx(dir / "stations.csv");
  if (!idx) throw std::runtime_error("cannot write " + (dir / "stations.csv").string());
  idx << "id,lon,lat,elev,elev_diff,mtpi\n";
  for (const StationRecord& s : stations) {
    idx << s.id << "," << format_double(s.lon) << "," << format_double(s.lat) << ","
        << format_double(s.elev) << "," << format_double(s.elev_diff) << ","
        << format_double(s.mtpi) << "\n";
    std::ofstream os(dir / (s.id + ".csv"));
    if (!os) throw std::runtime_error("cannot write station series for " + s.id);
    os << "date,value\n";
    for (const auto& [date, value] : s.series) {
      os << date_to_string(date) << "," << format_double(value) << "\n";
    }
  }
}

std::vector<StationRecord> load_stations(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "stations.csv");
  if (!idx) throw std::runtime_error("cannot open " + (dir / "stations.csv").string());
  std::string line;
  if (!std::getline(idx, line)) throw std::runtime_error("empty station index in " + dir.string());
  std::vector<StationRecord> out;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw std::runtime_error("bad station index row: " + line);
    StationRecord s;
    s.id = f[0];
    s.lon = std::stod(f[1]);
    s.lat = std::stod(f[2]);
    s.elev = std::stod(f[3]);
    s.elev_diff = std::stod(f[4]);
    s.mtpi = std::stod(f[5]);
    std::ifstream ss(dir / (s.id + ".csv"));
    if (!ss) throw std::runtime_error("missing station series file for " + s.id);
    std::string sline;
    std::getline(ss, sline);  // header
    while (std::getline(ss, sline)) {
      if (sline.empty()) continue;
      const auto sf = split_csv_line(sline);
      if (sf.size() != 2) throw std::runtime_error("bad series row for " + s.id + ": " + sline);
      s.series.emplace_back(parse_date(sf[0]), std::stod(sf[1]));
    }
    std::sort(s.series.begin(), s.series.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FoldSpec> make_folds(const std::vector<int>& years) {
  if (years.size() != 30) {
    throw std::invalid_argument("make_folds: expected 30 years, got " +
                                std::to_string(years.size()));
  }
  for (std::size_t i = 1; i < years.size(); ++i) {
    if (years[i] != years[i - 1] + 1) {
      throw std::invalid_argument("make_folds: years must be consecutive");
    }
  }
  std::vector<FoldSpec> folds;
  for (int k = 1; k <= 5; ++k) {
    FoldSpec f;
    f.fold_id = k;
    const int lo = 6 * (k - 1), hi = 6 * k;
    for (int i = 0; i < 30; ++i) {
      if (i >= lo && i < hi) {
        f.test_years.push_back(years[i]);
      } else {
        f.train_years.push_back(years[i]);
      }
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

nlohmann::ordered_json StandardizationStats::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < channels.size(); ++c) {
    nlohmann::ordered_json e;
    e["name"] = channels[c];
    e["mean"] = mean[c];
    e["stddev"] = stddev[c];
    j.push_back(std::move(e));
  }
  return j;
}

StandardizationStats StandardizationStats::from_json(const nlohmann::json& j) {
  StandardizationStats s;
  for (const auto& e : j) {
    s.channels.push_back(e.at("name").get<std::string>());
    s.mean.push_back(e.at("mean").get<double>());
    s.stddev.push_back(e.at("stddev").get<double>());
  }
  return s;
}

std::uint64_t StandardizationStats::fingerprint() const {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  for (std::size_t c = 0; c < channels.size(); ++c) {
    for (char ch : channels[c]) mix(static_cast<std::uint64_t>(ch));
    mix(std::bit_cast<std::uint64_t>(mean[c]));
    mix(std::bit_cast<std::uint64_t>(stddev[c]));
  }
  return h;
}

StandardizationStats compute_stats(const GridSeries& gs, const std::vector<int>& train_days,
                                   const std::set<std::string>& invariant_channels) {
  if (gs.days.empty()) throw std::invalid_argument("compute_stats: empty series");
  if (train_days.empty()) throw std::invalid_argument("compute_stats: no training days");
  const auto& channels = gs.channels();
  StandardizationStats out;
  out.channels = channels;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const int ci = static_cast<int>(c);
    const bool invariant = invariant_channels.count(channels[c]) > 0;
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    auto absorb_day = [&](const PredictorGrid& g) {
      for (int i = 0; i < g.n_lat(); ++i)
        for (int j = 0; j < g.n_lon(); ++j)
          if (g.mask(i, j, ci) != 0.0) {
            const double v = g.values(i, j, ci);
            sum += v;
            sum2 += v * v;
            ++n;
          }
    };
    if (invariant) {
      absorb_day(gs.days[static_cast<std::size_t>(train_days.front())]);
    } else {
      for (int d : train_days) absorb_day(gs.days[static_cast<std::size_t>(d)]);
    }
    if (n == 0) throw std::invalid_argument("compute_stats: channel fully masked: " + channels[c]);
    const double m = sum / static_cast<double>(n);
    double var = sum2 / static_cast<double>(n) - m * m;
    if (var < 0.0) var = 0.0;
    const double sd = std::sqrt(var);
    out.mean.push_back(m);
    out.stddev.push_back(sd > 1e-12 ? sd : 1.0);  // constant channels pass through centered
  }
  return out;
}

void standardize(GridSeries& gs, const StandardizationStats& stats) {
  if (gs.channels() != stats.channels) {
    throw std::invalid_argument("standardize: stats channels do not match the series");
  }
  for (PredictorGrid& g : gs.days) {
    const int C = g.n_channels();
    for (int i = 0; i < g.n_lat(); ++i)
      for (int j = 0; j < g.n_lon(); ++j)
        for (int c = 0; c < C; ++c)
          if (g.mask(i, j, c) != 0.0) {
            g.values(i, j, c) = (g.values(i, j, c) - stats.mean[c]) / stats.stddev[c];
          }
  }
}

std::pair<double, double> encode_time(const Date& d) {
  const double angle = 2.0 * M_PI * (day_of_year(d) - 1) / 365.25;
  return {std::cos(angle), std::sin(angle)};
}

std::vector<std::string> synth_schema() {
  return {"t2m", "q700", "u500", "v500", "orog", "lat", "lon", "cos_t", "sin_t"};
}

namespace {

// Smooth random field over (lon, lat, day): a small bank of cosine features
// with random wave vectors, temporal frequencies and phases.
class FourierField {
 public:
  FourierField(Rng& rng, int n_terms, double spatial_scale, double temporal_scale,
               double amplitude) {
    for (int k = 0; k < n_terms; ++k) {
      terms_.push_back({rng.normal() / spatial_scale, rng.normal() / spatial_scale,
                        rng.normal() / temporal_scale, rng.uniform(0.0, 2.0 * M_PI),
                        rng.normal() * amplitude / std::sqrt(static_cast<double>(n_terms))});
    }
  }

  double operator()(double lon, double lat, double day) const {
    double v = 0.0;
    for (const Term& t : terms_) {
      v += t.amp * std::cos(t.kx * lon + t.ky * lat + t.kt * day + t.phase);
    }
    return v;
  }

 private:
  struct Term {
    double kx, ky, kt, phase, amp;
  };
  std::vector<Term> terms_;
};

double bilinear(const PredictorGrid& g, int channel, double lon, double lat) {
  const double x = g.frac_x(lon);
  const double y = g.frac_y(lat);
  const int j0 = std::min(std::max(static_cast<int>(std::floor(x)), 0), g.n_lon() - 2);
  const int i0 = std::min(std::max(static_cast<int>(std::floor(y)), 0), g.n_lat() - 2);
  const double fx = x - j0, fy = y - i0;
  return (1 - fy) * ((1 - fx) * g.values(i0, j0, channel) + fx * g.values(i0, j0 + 1, channel)) +
         fy * ((1 - fx) * g.values(i0 + 1, j0, channel) + fx * g.values(i0 + 1, j0 + 1, channel));
}

}  // namespace

SynthWorld synth_generate(const SynthConfig& cfg) {
  if (cfg.n_stations <= 0 || cfg.n_days <= 0 || cfg.n_lat < 4 || cfg.n_lon < 4) {
    throw std::invalid_argument("synth_generate: bad configuration");
  }
  Rng master(cfg.seed);
  Rng field_rng = master.fork(1);
  Rng station_rng = master.fork(2);
  Rng obs_rng = master.fork(3);

  const double lon0 = 0.0, lat0 = 40.0, dstep = 0.5;
  const std::vector<std::string> channels = synth_schema();
  const int C = static_cast<int>(channels.size());

  const FourierField t2m_field(field_rng, 24, 3.0, 12.0, 3.0);
  const FourierField q_field(field_rng, 24, 3.0, 8.0, 1.0);
  const FourierField u_field(field_rng, 16, 4.0, 10.0, 1.0);
  const FourierField v_field(field_rng, 16, 4.0, 10.0, 1.0);
  const FourierField orog_field(field_rng, 12, 2.5, 1e12, 400.0);  // static

  SynthWorld world;
  std::vector<double> lons(static_cast<std::size_t>(cfg.n_lon));
  std::vector<double> lats(static_cast<std::size_t>(cfg.n_lat));
  for (int j = 0; j < cfg.n_lon; ++j) lons[j] = lon0 + dstep * j;
  for (int i = 0; i < cfg.n_lat; ++i) lats[i] = lat0 + dstep * i;

  for (int d = 0; d < cfg.n_days; ++d) {
    const Date date = add_days(cfg.start_date, d);
    const auto [cos_t, sin_t] = encode_time(date);
    PredictorGrid g;
    g.lons = lons;
    g.lats = lats;
    g.channels = channels;
    g.values = Tensor({cfg.n_lat, cfg.n_lon, C});
    g.mask = Tensor::full(g.values.shape(), 1.0);
    for (int i = 0; i < cfg.n_lat; ++i)
      for (int j = 0; j < cfg.n_lon; ++j) {
        const double lon = lons[j], lat = lats[i];
        g.values(i, j, 0) = t2m_field(lon, lat, d);
        g.values(i, j, 1) = q_field(lon, lat, d);
        g.values(i, j, 2) = u_field(lon, lat, d);
        g.values(i, j, 3) = v_field(lon, lat, d);
        g.values(i, j, 4) = orog_field(lon, lat, 0.0) + 600.0;
        g.values(i, j, 5) = lat;
        g.values(i, j, 6) = lon;
        g.values(i, j, 7) = cos_t;
        g.values(i, j, 8) = sin_t;
      }
    world.grids.dates.push_back(date);
    world.grids.days.push_back(std::move(g));
  }

  // Stations sit strictly inside the grid so bilinear sampling and readout
  // stay away from the border.
  const double margin = 1.5 * dstep;
  constexpr double kLapseRate = 6.5e-3;  // degrees C per m
  for (int s = 0; s < cfg.n_stations; ++s) {
    StationRecord st;
    char idbuf[8];
    std::snprintf(idbuf, sizeof idbuf, "S%03d", s);
    st.id = idbuf;
    st.lon = station_rng.uniform(lons.front() + margin, lons.back() - margin);
    st.lat = station_rng.uniform(lats.front() + margin, lats.back() - margin);
    const double grid_elev = bilinear(world.grids.days[0], 4, st.lon, st.lat);
    st.elev_diff = station_rng.uniform(-800.0, 800.0);
    st.elev = grid_elev + st.elev_diff;
    st.mtpi = station_rng.normal();

    StationRecord precip_st = st;
    for (int d = 0; d < cfg.n_days; ++d) {
      const PredictorGrid& g = world.grids.days[static_cast<std::size_t>(d)];
      const Date date = world.grids.dates[static_cast<std::size_t>(d)];
      const double t_large = bilinear(g, 0, st.lon, st.lat);
      const double tmax = t_large - kLapseRate * st.elev_diff + obs_rng.normal() * cfg.noise_sigma;
      st.series.emplace_back(date, tmax);

      const double q = bilinear(g, 1, st.lon, st.lat);
      const double wet_prob = 1.0 / (1.0 + std::exp(-(1.8 * q + 0.2)));
      double amount = 0.0;
      if (obs_rng.uniform() < wet_prob) {
        amount = obs_rng.gamma(2.0, 1.6 * std::exp(0.4 * q));
      }
      precip_st.series.emplace_back(date, amount);
    }
    world.tmax_stations.push_back(std::move(st));
    world.precip_stations.push_back(std::move(precip_st));
  }
  return world;
}

Dataset Dataset::build(GridSeries grids, std::vector<StationRecord> stations, Variable variable,
                       double wet_threshold) {
  Dataset ds;
  ds.grids = std::move(grids);
  ds.stations = std::move(stations);
  ds.variable = variable;
  ds.wet_threshold = wet_threshold;
  std::map<long, int> day_index;
  for (int d = 0; d < ds.grids.n_days(); ++d) {
    day_index[days_from_civil(ds.grids.dates[static_cast<std::size_t>(d)])] = d;
  }
  ds.obs.assign(ds.stations.size(),
                std::vector<std::optional<double>>(static_cast<std::size_t>(ds.grids.n_days())));
  for (std::size_t s = 0; s < ds.stations.size(); ++s) {
    for (const auto& [date, value] : ds.stations[s].series) {
      if (variable == Variable::kPrecip && value < 0.0) {
        throw std::invalid_argument("Dataset: negative precipitation at station " +
                                    ds.stations[s].id);
      }
      const auto it = day_index.find(days_from_civil(date));
      if (it != day_index.end()) ds.obs[s][static_cast<std::size_t>(it->second)] = value;
    }
  }
  return ds;
}

}  // namespace dcnp::data
