#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dcnp/data.hpp"
#include "test_util.hpp"

using namespace dcnp;
using namespace dcnp::data;

namespace {

GridSeries tiny_series(int n_days, int n_lat, int n_lon, int n_ch, Rng& rng,
                       Date start = {2001, 1, 1}, int stride_days = 1) {
  GridSeries gs;
  for (int d = 0; d < n_days; ++d) {
    PredictorGrid g;
    for (int j = 0; j < n_lon; ++j) g.lons.push_back(5.0 + 0.25 * j);
    for (int i = 0; i < n_lat; ++i) g.lats.push_back(45.0 + 0.25 * i);
    for (int c = 0; c < n_ch; ++c) g.channels.push_back("ch" + std::to_string(c));
    g.values = testutil::random_tensor({n_lat, n_lon, n_ch}, rng);
    g.mask = Tensor::full(g.values.shape(), 1.0);
    gs.days.push_back(std::move(g));
    gs.dates.push_back(add_days(start, d * stride_days));
  }
  return gs;
}

}  // namespace

TEST_CASE("grid container round-trips bit-exactly") {
  Rng rng(1);
  GridSeries gs = tiny_series(3, 4, 5, 2, rng);
  gs.days[1].mask(2, 3, 0) = 0.0;
  gs.days[1].values(2, 3, 0) = 0.0;  // masked values are not stored
  const auto path = std::filesystem::temp_directory_path() / "dcnp_grid_rt.dcgr";
  save_grids(path, gs);
  const GridSeries back = load_grids(path);
  REQUIRE(back.n_days() == 3);
  CHECK(back.dates == gs.dates);
  CHECK(back.channels() == gs.channels());
  for (int d = 0; d < 3; ++d) {
    CHECK(back.days[d].lons == gs.days[d].lons);
    CHECK(back.days[d].lats == gs.days[d].lats);
    for (int i = 0; i < gs.days[d].values.size(); ++i) {
      CHECK(back.days[d].values[i] == gs.days[d].values[i]);
      CHECK(back.days[d].mask[i] == gs.days[d].mask[i]);
    }
  }
  // A second write of the loaded series is byte-identical.
  const auto path2 = std::filesystem::temp_directory_path() / "dcnp_grid_rt2.dcgr";
  save_grids(path2, back);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("masked cells come back masked") {
  Rng rng(2);
  GridSeries gs = tiny_series(1, 4, 4, 1, rng);
  gs.days[0].mask(1, 2, 0) = 0.0;
  const auto path = std::filesystem::temp_directory_path() / "dcnp_grid_mask.dcgr";
  save_grids(path, gs);
  const GridSeries back = load_grids(path);
  CHECK(back.days[0].mask(1, 2, 0) == 0.0);
  CHECK(back.days[0].values(1, 2, 0) == 0.0);
  CHECK(back.days[0].mask(0, 0, 0) == 1.0);
  std::filesystem::remove(path);
}

TEST_CASE("malformed grid header reports the byte offset") {
  const auto path = std::filesystem::temp_directory_path() / "dcnp_grid_bad.dcgr";
  {
    std::ofstream os(path, std::ios::binary);
    os << "DCGR";
    const std::uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    // Truncated: header promises more than the file holds.
  }
  try {
    load_grids(path);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("byte") != std::string::npos);
  }
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_WITH_AS(load_grids(path), doctest::Contains("magic"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("unknown channels and date gaps are detected") {
  Rng rng(3);
  GridSeries gs = tiny_series(2, 4, 4, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "dcnp_grid_sch.dcgr";
  save_grids(path, gs);
  CHECK_THROWS_WITH_AS(load_grids(path, {"ch0", "other"}), doctest::Contains("unknown channel"),
                       std::runtime_error);

  GridSeries gap = tiny_series(3, 4, 4, 1, rng, {2001, 1, 1}, /*stride_days=*/3);
  save_grids(path, gap);
  std::vector<std::string> report;
  const GridSeries back = load_grids(path, {}, &report);
  CHECK(back.n_days() == 3);  // tolerated
  CHECK(report.size() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("station files round-trip") {
  StationRecord s;
  s.id = "S007";
  s.lon = 7.25;
  s.lat = 46.5;
  s.elev = 1203.0;
  s.elev_diff = -313.5;
  s.mtpi = 0.77;
  s.series = {{Date{2001, 1, 1}, 3.5}, {Date{2001, 1, 2}, -1.25}};
  const auto dir = std::filesystem::temp_directory_path() / "dcnp_stations_rt";
  std::filesystem::remove_all(dir);
  save_stations(dir, {s});
  const auto back = load_stations(dir);
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == "S007");
  CHECK(back[0].lon == s.lon);
  CHECK(back[0].elev_diff == s.elev_diff);
  REQUIRE(back[0].series.size() == 2);
  CHECK(back[0].series[1].second == -1.25);
  std::filesystem::remove_all(dir);
}

TEST_CASE("time encoding starts the year at angle zero and wraps continuously") {
  const auto [c1, s1] = encode_time(Date{2000, 1, 1});
  CHECK(std::fabs(c1 - 1.0) < 1e-6);
  CHECK(std::fabs(s1) < 1e-6);
  const auto [c2, s2] = encode_time(Date{2001, 4, 2});  // ~ a quarter year
  CHECK(std::fabs(c2) < 0.02);
  CHECK(std::fabs(s2 - 1.0) < 0.01);
  const auto [c3, s3] = encode_time(Date{2001, 12, 31});
  CHECK(std::fabs(c3 - 1.0) < 0.02);
}

TEST_CASE("five folds over thirty years follow the protocol") {
  std::vector<int> years;
  for (int y = 1979; y <= 2008; ++y) years.push_back(y);
  const auto folds = make_folds(years);
  REQUIRE(folds.size() == 5);
  CHECK(folds[0].fold_id == 1);
  CHECK(folds[0].test_years == std::vector<int>{1979, 1980, 1981, 1982, 1983, 1984});
  CHECK(folds[0].train_years.size() == 24);
  // Union of the test windows covers every year exactly once.
  std::set<int> covered;
  for (const auto& f : folds) {
    for (int y : f.test_years) {
      CHECK(covered.insert(y).second);  // disjoint
    }
    CHECK(f.test_years.size() == 6);
  }
  CHECK(covered.size() == 30);
  CHECK_THROWS_AS(make_folds({1979, 1980}), std::invalid_argument);
  std::vector<int> gapped = years;
  gapped[10] = 2020;
  CHECK_THROWS_AS(make_folds(gapped), std::invalid_argument);
}

TEST_CASE("standardization centers and scales the training days") {
  Rng rng(4);
  GridSeries gs = tiny_series(20, 6, 6, 3, rng);
  // Mark ch2 invariant in time.
  for (auto& day : gs.days) {
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) day.values(i, j, 2) = gs.days[0].values(i, j, 2);
  }
  std::vector<int> train_days;
  for (int d = 0; d < 15; ++d) train_days.push_back(d);
  const auto stats = compute_stats(gs, train_days, {"ch2"});
  GridSeries std_gs = gs;
  standardize(std_gs, stats);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (int d : train_days) {
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double v = std_gs.days[d].values(i, j, c);
          sum += v;
          sum2 += v * v;
          ++n;
        }
    }
    const double m = sum / n;
    const double sd = std::sqrt(sum2 / n - m * m);
    CHECK(std::fabs(m) < 1e-6);
    CHECK(std::fabs(sd - 1.0) < 1e-6);
  }

  // Applying identity stats changes nothing.
  StandardizationStats identity;
  identity.channels = gs.channels();
  identity.mean = {0.0, 0.0, 0.0};
  identity.stddev = {1.0, 1.0, 1.0};
  GridSeries copy = std_gs;
  standardize(copy, identity);
  for (int i = 0; i < copy.days[0].values.size(); ++i) {
    CHECK(copy.days[0].values[i] == std_gs.days[0].values[i]);
  }

  // Leakage guard: stats depend only on the training days.
  std::vector<int> all_days;
  for (int d = 0; d < 20; ++d) all_days.push_back(d);
  const auto train_only = compute_stats(gs, train_days, {"ch2"});
  const auto with_test = compute_stats(gs, all_days, {"ch2"});
  CHECK(stats.fingerprint() == train_only.fingerprint());
  CHECK(stats.fingerprint() != with_test.fingerprint());
}

TEST_CASE("synthetic worlds are reproducible from the seed") {
  SynthConfig cfg;
  cfg.seed = 42;
  cfg.n_days = 12;
  cfg.n_stations = 5;
  const SynthWorld a = synth_generate(cfg);
  const SynthWorld b = synth_generate(cfg);
  for (int i = 0; i < a.grids.days[3].values.size(); ++i) {
    CHECK(a.grids.days[3].values[i] == b.grids.days[3].values[i]);
  }
  for (std::size_t s = 0; s < a.tmax_stations.size(); ++s) {
    CHECK(a.tmax_stations[s].lon == b.tmax_stations[s].lon);
    for (std::size_t d = 0; d < a.tmax_stations[s].series.size(); ++d) {
      CHECK(a.tmax_stations[s].series[d].second == b.tmax_stations[s].series[d].second);
      CHECK(a.precip_stations[s].series[d].second == b.precip_stations[s].series[d].second);
    }
  }
  SynthConfig other = cfg;
  other.seed = 43;
  const SynthWorld c = synth_generate(other);
  CHECK(a.grids.days[0].values(0, 0, 0) != c.grids.days[0].values(0, 0, 0));
}

namespace {

double bilinear_ref(const PredictorGrid& g, int ch, double lon, double lat) {
  const double x = (lon - g.lons.front()) / (g.lons[1] - g.lons[0]);
  const double y = (lat - g.lats.front()) / (g.lats[1] - g.lats[0]);
  const int j0 = static_cast<int>(std::floor(x));
  const int i0 = static_cast<int>(std::floor(y));
  const double fx = x - j0, fy = y - i0;
  return (1 - fy) * ((1 - fx) * g.values(i0, j0, ch) + fx * g.values(i0, j0 + 1, ch)) +
         fy * ((1 - fx) * g.values(i0 + 1, j0, ch) + fx * g.values(i0 + 1, j0 + 1, ch));
}

}  // namespace

TEST_CASE("noise-free temperature follows the lapse-rate construction") {
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_days = 5;
  cfg.n_stations = 8;
  cfg.noise_sigma = 0.0;
  const SynthWorld w = synth_generate(cfg);
  for (const auto& st : w.tmax_stations) {
    for (std::size_t d = 0; d < st.series.size(); ++d) {
      const double large = bilinear_ref(w.grids.days[d], 0, st.lon, st.lat);
      CHECK(std::fabs(st.series[d].second - (large - 6.5e-3 * st.elev_diff)) < 1e-9);
    }
  }
  // Equivalent reading: +1000 m of sub-grid elevation difference cools the
  // site by 6.5 degrees.
  const auto& st = w.tmax_stations[0];
  const double large = bilinear_ref(w.grids.days[0], 0, st.lon, st.lat);
  const double here = st.series[0].second;
  const double would_be = large - 6.5e-3 * (st.elev_diff + 1000.0);
  CHECK(std::fabs((here - would_be) - 6.5) < 1e-9);
}

TEST_CASE("generated wet fraction tracks the humidity gate") {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.n_days = 1000;
  cfg.n_stations = 100;
  cfg.n_lat = 8;
  cfg.n_lon = 8;
  const SynthWorld w = synth_generate(cfg);
  double wet = 0.0, expect = 0.0;
  long n = 0;
  for (const auto& st : w.precip_stations) {
    for (std::size_t d = 0; d < st.series.size(); ++d) {
      wet += st.series[d].second > 0.0 ? 1.0 : 0.0;
      const double q = bilinear_ref(w.grids.days[d], 1, st.lon, st.lat);
      expect += 1.0 / (1.0 + std::exp(-(1.8 * q + 0.2)));
      ++n;
    }
  }
  CHECK(n == 100000);
  CHECK(std::fabs(wet / n - expect / n) < 0.02);
}

TEST_CASE("dataset alignment matches observations to grid days") {
  Rng rng(5);
  GridSeries gs = tiny_series(4, 4, 4, 1, rng);
  StationRecord st;
  st.id = "A";
  st.lon = 5.4;
  st.lat = 45.4;
  st.series = {{gs.dates[1], 2.0}, {gs.dates[3], 4.0}, {Date{1999, 1, 1}, -99.0}};
  Dataset ds = Dataset::build(std::move(gs), {st}, Variable::kTmax);
  CHECK_FALSE(ds.obs[0][0].has_value());
  CHECK(ds.obs[0][1] == 2.0);
  CHECK_FALSE(ds.obs[0][2].has_value());
  CHECK(ds.obs[0][3] == 4.0);
}

TEST_CASE("negative precipitation observations are rejected") {
  Rng rng(6);
  GridSeries gs = tiny_series(2, 4, 4, 1, rng);
  StationRecord st;
  st.id = "A";
  st.series = {{gs.dates[0], -0.5}};
  CHECK_THROWS_AS(Dataset::build(std::move(gs), {st}, Variable::kPrecip), std::invalid_argument);
}
