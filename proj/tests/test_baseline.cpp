#include <doctest.h>

#include <cmath>

#include "dcnp/baseline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dcnp;
using namespace dcnp::baseline;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("mlr recovers exact affine responses") {
  Rng rng(1);
  const Tensor X = random_tensor({40, 3}, rng);
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) y.push_back(1.5 - 2.0 * X(i, 0) + 0.75 * X(i, 1) + 3.0 * X(i, 2));
  const auto model = fit_mlr(X, y);
  CHECK(std::fabs(model.coefficients[0] - 1.5) < 1e-9);
  CHECK(std::fabs(model.coefficients[1] + 2.0) < 1e-9);
  double rss = 0.0;
  for (int i = 0; i < 40; ++i) {
    const double pred = model.predict({X(i, 0), X(i, 1), X(i, 2)});
    rss += (pred - y[static_cast<std::size_t>(i)]) * (pred - y[static_cast<std::size_t>(i)]);
  }
  CHECK(std::sqrt(rss) < 1e-9);
}

TEST_CASE("mlr on a constant response gives zero slopes and the mean intercept") {
  Rng rng(2);
  const Tensor X = random_tensor({30, 2}, rng);
  const std::vector<double> y(30, 4.25);
  const auto model = fit_mlr(X, y);
  CHECK(std::fabs(model.coefficients[0] - 4.25) < 1e-10);
  CHECK(std::fabs(model.coefficients[1]) < 1e-10);
  CHECK(std::fabs(model.coefficients[2]) < 1e-10);
}

TEST_CASE("mlr matches the normal-equations oracle on random systems") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Rng draw = rng.fork(static_cast<std::uint64_t>(rep));
    const Tensor X = random_tensor({25, 3}, draw);
    std::vector<double> y;
    for (int i = 0; i < 25; ++i) y.push_back(draw.uniform(-5, 5));
    const auto model = fit_mlr(X, y);
    const auto ref = oracles::normal_equations_ref(X, y);
    for (int k = 0; k < 4; ++k) {
      CHECK(rel_err(model.coefficients[static_cast<std::size_t>(k)],
                    ref[static_cast<std::size_t>(k)]) < 1e-8);
    }
  }
}

TEST_CASE("mlr names the dependent columns of a rank-deficient design") {
  Rng rng(4);
  Tensor X({20, 3});
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = rng.uniform(-1, 1);
    X(i, 1) = 2.0 * X(i, 0);  // dependent
    X(i, 2) = rng.uniform(-1, 1);
  }
  std::vector<double> y(20, 1.0);
  CHECK_THROWS_WITH_AS(fit_mlr(X, y, {"a", "twice_a", "b"}), doctest::Contains("dependent"),
                       std::invalid_argument);
  try {
    fit_mlr(X, y, {"a", "twice_a", "b"});
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK((msg.find("a") != std::string::npos || msg.find("twice_a") != std::string::npos));
  }
  CHECK_THROWS_AS(fit_mlr(Tensor({3, 3}), {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("mlr residuals are orthogonal to every predictor column") {
  Rng rng(5);
  const Tensor X = random_tensor({60, 4}, rng);
  std::vector<double> y;
  for (int i = 0; i < 60; ++i) y.push_back(rng.uniform(-3, 3));
  const auto model = fit_mlr(X, y);
  for (int c = 0; c < 4; ++c) {
    double dot = 0.0, norm = 0.0;
    for (int i = 0; i < 60; ++i) {
      std::vector<double> x(4);
      for (int k = 0; k < 4; ++k) x[static_cast<std::size_t>(k)] = X(i, k);
      const double r = y[static_cast<std::size_t>(i)] - model.predict(x);
      dot += r * X(i, c);
      norm += std::fabs(r * X(i, c));
    }
    CHECK(std::fabs(dot) <= 1e-8 * std::max(norm, 1.0));
  }
}

TEST_CASE("logistic fit separates a deterministic threshold correctly") {
  Tensor X({40, 1});
  std::vector<bool> wet(40);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = -2.0 + 0.1 * i;
    wet[static_cast<std::size_t>(i)] = X(i, 0) > 0.05;
  }
  const auto model = fit_logistic(X, wet);
  for (int i = 0; i < 40; ++i) {
    const double p = model.predict({X(i, 0)});
    CHECK((p > 0.5) == wet[static_cast<std::size_t>(i)]);
  }
  CHECK(model.separation_flagged);  // perfect separation is detected, not fatal
}

TEST_CASE("intercept-only logistic fit is the logit of the wet fraction") {
  const int n = 50;
  Tensor X({n, 0});
  std::vector<bool> wet(n, false);
  for (int i = 0; i < 20; ++i) wet[static_cast<std::size_t>(i)] = true;
  const auto model = fit_logistic(X, wet);
  const double frac = 0.4;
  CHECK(std::fabs(model.coefficients[0] - std::log(frac / (1 - frac))) < 1e-8);
  CHECK_THROWS_AS(fit_logistic(X, std::vector<bool>(n, true)), std::invalid_argument);
}

TEST_CASE("logistic recovers simulated coefficients within three standard errors") {
  Rng rng(6);
  const int n = 5000;
  const double b0 = -0.4, b1 = 1.3, b2 = -0.8;
  Tensor X({n, 2});
  std::vector<bool> wet(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    const double eta = b0 + b1 * X(i, 0) + b2 * X(i, 1);
    wet[static_cast<std::size_t>(i)] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta));
  }
  const auto model = fit_logistic(X, wet);
  // Fisher information at the fit gives the standard errors.
  std::vector<double> info(9, 0.0);
  for (int i = 0; i < n; ++i) {
    const double p = model.predict({X(i, 0), X(i, 1)});
    const double w = p * (1 - p);
    const double f[3] = {1.0, X(i, 0), X(i, 1)};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) info[static_cast<std::size_t>(a * 3 + b)] += w * f[a] * f[b];
  }
  const auto cov = oracles::gauss_jordan_inverse(info, 3);
  const double truth[3] = {b0, b1, b2};
  for (int k = 0; k < 3; ++k) {
    const double se = std::sqrt(cov[static_cast<std::size_t>(k * 3 + k)]);
    CHECK(std::fabs(model.coefficients[static_cast<std::size_t>(k)] - truth[k]) < 3.0 * se);
  }
}

TEST_CASE("logistic mean predicted probability equals the empirical wet fraction") {
  Rng rng(7);
  const int n = 400;
  Tensor X({n, 2});
  std::vector<bool> wet(n);
  int n_wet = 0;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.uniform(-2, 2);
    wet[static_cast<std::size_t>(i)] = rng.uniform() < 0.35 + 0.1 * std::tanh(X(i, 0));
    n_wet += wet[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  const auto model = fit_logistic(X, wet);
  double mean_p = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = model.predict({X(i, 0), X(i, 1)});
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    mean_p += p;
  }
  mean_p /= n;
  CHECK(std::fabs(mean_p - static_cast<double>(n_wet) / n) < 1e-6);
}

TEST_CASE("gamma glm recovers a log-linear mean") {
  Rng rng(8);
  const int n = 4000;
  Tensor X({n, 2});
  std::vector<double> y(static_cast<std::size_t>(n));
  const double b0 = 0.6, b1 = 0.5, b2 = -0.3;
  const double shape = 25.0;  // tiny relative noise
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-1, 1);
    X(i, 1) = rng.uniform(-1, 1);
    const double mu = std::exp(b0 + b1 * X(i, 0) + b2 * X(i, 1));
    y[static_cast<std::size_t>(i)] = rng.gamma(shape, mu / shape);
  }
  const auto model = fit_gamma_glm(X, y);
  CHECK(std::fabs(model.coefficients[0] - b0) < 1e-2);
  CHECK(std::fabs(model.coefficients[1] - b1) < 1e-2);
  CHECK(std::fabs(model.coefficients[2] - b2) < 1e-2);
  CHECK(model.dispersion == doctest::Approx(1.0 / shape).epsilon(0.2));
}

TEST_CASE("intercept-only gamma glm fits the sample mean through the log link") {
  Rng rng(9);
  const int n = 200;
  Tensor X({n, 0});
  std::vector<double> y;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    y.push_back(rng.gamma(2.0, 3.0));
    mean += y.back();
  }
  mean /= n;
  const auto model = fit_gamma_glm(X, y);
  CHECK(std::fabs(model.coefficients[0] - std::log(mean)) < 1e-8);
  CHECK_THROWS_AS(fit_gamma_glm(X, std::vector<double>(n, 0.0)), std::invalid_argument);
}

TEST_CASE("gamma glm recovers simulated coefficients within three standard errors") {
  Rng rng(10);
  const int n = 5000;
  const double b0 = 0.3, b1 = 0.7;
  const double shape = 3.0;
  Tensor X({n, 1});
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform(-1, 1);
    const double mu = std::exp(b0 + b1 * X(i, 0));
    y[static_cast<std::size_t>(i)] = rng.gamma(shape, mu / shape);
  }
  const auto model = fit_gamma_glm(X, y);
  // cov(beta) = dispersion * (X'X)^-1 under the unit-weight log link.
  std::vector<double> xtx(4, 0.0);
  for (int i = 0; i < n; ++i) {
    const double f[2] = {1.0, X(i, 0)};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) xtx[static_cast<std::size_t>(a * 2 + b)] += f[a] * f[b];
  }
  const auto inv = oracles::gauss_jordan_inverse(xtx, 2);
  const double truth[2] = {b0, b1};
  for (int k = 0; k < 2; ++k) {
    const double se = std::sqrt(model.dispersion * inv[static_cast<std::size_t>(k * 2 + k)]);
    CHECK(std::fabs(model.coefficients[static_cast<std::size_t>(k)] - truth[k]) < 3.0 * se);
  }
}

namespace {

std::vector<SitePoint> spread_points(int n, Rng& rng) {
  std::vector<SitePoint> pts;
  for (int i = 0; i < n; ++i) {
    pts.push_back({rng.uniform(0, 6), rng.uniform(40, 46), rng.uniform(0, 2000)});
  }
  return pts;
}

}  // namespace

TEST_CASE("thin-plate spline reproduces affine functions exactly") {
  Rng rng(11);
  const auto pts = spread_points(12, rng);
  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(2.0 + 0.5 * p.lon - 1.5 * p.lat + 0.002 * p.elev);
  const auto model = tps_fit(pts, vals);
  for (double w : model.weights) CHECK(std::fabs(w) < 1e-7);
  Rng probe(12);
  for (int rep = 0; rep < 10; ++rep) {
    const SitePoint q{probe.uniform(0, 6), probe.uniform(40, 46), probe.uniform(0, 2000)};
    const double want = 2.0 + 0.5 * q.lon - 1.5 * q.lat + 0.002 * q.elev;
    CHECK(std::fabs(tps_eval(model, q) - want) < 1e-8);
  }
}

TEST_CASE("thin-plate spline interpolates its fitting points") {
  Rng rng(13);
  const auto pts = spread_points(15, rng);
  std::vector<double> vals;
  for (int i = 0; i < 15; ++i) vals.push_back(rng.uniform(-5, 5));
  const auto model = tps_fit(pts, vals);
  for (int i = 0; i < 15; ++i) {
    CHECK(std::fabs(tps_eval(model, pts[static_cast<std::size_t>(i)]) -
                    vals[static_cast<std::size_t>(i)]) < 1e-7);
  }
  // Orthogonality side conditions of the interpolation system.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    s0 += model.weights[i];
    s1 += model.weights[i] * model.centers[i][0];
    s2 += model.weights[i] * model.centers[i][1];
    s3 += model.weights[i] * model.centers[i][2];
  }
  CHECK(std::fabs(s0) < 1e-8);
  CHECK(std::fabs(s1) < 1e-8);
  CHECK(std::fabs(s2) < 1e-8);
  CHECK(std::fabs(s3) < 1e-8);
}

TEST_CASE("thin-plate spline needs five points and distinct sites") {
  Rng rng(14);
  const auto pts = spread_points(4, rng);
  CHECK_THROWS_AS(tps_fit(pts, {1, 2, 3, 4}), std::invalid_argument);
  auto dup = spread_points(6, rng);
  dup[3] = dup[2];
  std::vector<double> vals = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(tps_fit(dup, vals), numeric_error);
}

TEST_CASE("thin-plate spline beats nearest neighbor on a smooth field") {
  Rng rng(15);
  const auto pts = spread_points(20, rng);
  auto field = [](const SitePoint& p) {
    return std::sin(p.lon) + 0.3 * std::cos(0.8 * p.lat) + 1e-4 * p.elev;
  };
  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(field(p));
  double tps_err = 0.0, nn_err = 0.0;
  for (int leave = 0; leave < 20; ++leave) {
    std::vector<SitePoint> sub;
    std::vector<double> subv;
    for (int i = 0; i < 20; ++i) {
      if (i == leave) continue;
      sub.push_back(pts[static_cast<std::size_t>(i)]);
      subv.push_back(vals[static_cast<std::size_t>(i)]);
    }
    const auto model = tps_fit(sub, subv);
    const SitePoint& q = pts[static_cast<std::size_t>(leave)];
    tps_err += std::fabs(tps_eval(model, q) - vals[static_cast<std::size_t>(leave)]);
    double best = 1e300;
    double nnv = 0.0;
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const double dx = sub[i].lon - q.lon, dy = sub[i].lat - q.lat,
                   dz = (sub[i].elev - q.elev) / 1000.0;
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        nnv = subv[i];
      }
    }
    nn_err += std::fabs(nnv - vals[static_cast<std::size_t>(leave)]);
  }
  CHECK(tps_err < nn_err);
}

TEST_CASE("gp interpolates training values in the small-noise limit") {
  // Points at least a lengthscale apart keep the system well conditioned.
  std::vector<SitePoint> pts;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) pts.push_back({3.0 * i, 40.0 + 3.0 * j, 500.0 * (i + j)});
  std::vector<double> vals;
  Rng rng(16);
  for (std::size_t i = 0; i < pts.size(); ++i) vals.push_back(rng.uniform(-2, 2));
  GpHyper hyper;
  hyper.signal_var = 1.0;
  hyper.noise = 1e-12;
  const auto model = gp_fit(pts, vals, hyper);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto pred = gp_predict(model, pts[i]);
    CHECK(std::fabs(pred.mean - vals[i]) < 1e-6);
    CHECK(pred.variance >= 0.0);
    CHECK(pred.variance < 1e-6);
    CHECK(pred.variance <= 1e-10);  // noise-free training input
  }
}

TEST_CASE("gp reverts to the prior far from all data") {
  Rng rng(17);
  const auto pts = spread_points(10, rng);
  std::vector<double> vals;
  for (int i = 0; i < 10; ++i) vals.push_back(rng.uniform(-3, 3));
  GpHyper hyper;
  hyper.signal_var = 2.5;
  const auto model = gp_fit(pts, vals, hyper);
  const auto pred = gp_predict(model, {200.0, 120.0, 30000.0});
  CHECK(std::fabs(pred.mean) < 1e-9);
  CHECK(pred.mean == doctest::Approx(0.0));
  CHECK(pred.variance == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("gp posterior matches the dense linear-algebra oracle") {
  Rng rng(18);
  for (int rep = 0; rep < 50; ++rep) {
    Rng draw = rng.fork(static_cast<std::uint64_t>(rep));
    std::vector<SitePoint> pts;
    std::vector<std::array<double, 3>> raw;
    std::vector<double> vals;
    for (int i = 0; i < 15; ++i) {
      const SitePoint p{draw.uniform(0, 8), draw.uniform(40, 48), draw.uniform(0, 2500)};
      pts.push_back(p);
      raw.push_back({p.lon, p.lat, p.elev});
      vals.push_back(draw.uniform(-4, 4));
    }
    GpHyper hyper;
    hyper.signal_var = draw.uniform(0.5, 3.0);
    hyper.noise = 1e-6;
    const auto model = gp_fit(pts, vals, hyper);
    const SitePoint q{draw.uniform(0, 8), draw.uniform(40, 48), draw.uniform(0, 2500)};
    const auto got = gp_predict(model, q);
    const auto ref = oracles::gp_posterior_ref(raw, vals, {q.lon, q.lat, q.elev},
                                               {hyper.l_lon, hyper.l_lat, hyper.l_elev},
                                               hyper.signal_var, hyper.noise);
    CHECK(std::fabs(got.mean - ref.mean) < 1e-8);
    CHECK(std::fabs(got.variance - std::max(ref.variance, 0.0)) < 1e-8);
  }
}

TEST_CASE("gp hyper refinement never lowers the marginal likelihood") {
  Rng rng(19);
  const auto pts = spread_points(12, rng);
  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(std::sin(p.lon) + 0.01 * rng.normal());
  GpHyper start;
  start.signal_var = 1.0;
  const double before = gp_log_marginal(pts, vals, start);
  const GpHyper tuned = gp_refine_hyper(pts, vals, start, 2);
  CHECK(gp_log_marginal(pts, vals, tuned) >= before);
}

TEST_CASE("unseen-site interpolation reproduces a coincident station") {
  Rng rng(20);
  const auto pts = spread_points(8, rng);
  std::vector<std::vector<double>> preds(8);
  for (int s = 0; s < 8; ++s) {
    for (int d = 0; d < 10; ++d) {
      preds[static_cast<std::size_t>(s)].push_back(10.0 + std::sin(0.3 * d + s) + 0.01 * s);
    }
  }
  TargetSite target;
  target.lon = pts[3].lon;
  target.lat = pts[3].lat;
  target.elev = pts[3].elev;
  const auto series =
      baseline_predict_unseen(pts, preds, target, data::Variable::kTmax);
  for (int d = 0; d < 10; ++d) {
    CHECK(std::fabs(series[static_cast<std::size_t>(d)] - preds[3][static_cast<std::size_t>(d)]) <
          1e-5);
  }
}

TEST_CASE("identical station series interpolate to the same series anywhere") {
  Rng rng(21);
  const auto pts = spread_points(9, rng);
  std::vector<double> series;
  for (int d = 0; d < 12; ++d) series.push_back(5.0 + 2.0 * std::sin(0.5 * d));
  const std::vector<std::vector<double>> preds(9, series);
  TargetSite target{3.0, 43.0, 700.0, 0.0, 0.0};
  for (const auto variable : {data::Variable::kTmax, data::Variable::kPrecip}) {
    const auto out = baseline_predict_unseen(pts, preds, target, variable);
    for (int d = 0; d < 12; ++d) {
      CHECK(std::fabs(out[static_cast<std::size_t>(d)] - series[static_cast<std::size_t>(d)]) <
            1e-6);
    }
  }
}

TEST_CASE("unseen-site interpolation needs five stations and is non-negative for precip") {
  Rng rng(22);
  const auto pts = spread_points(4, rng);
  const std::vector<std::vector<double>> preds(4, std::vector<double>(5, 1.0));
  TargetSite t{1.0, 41.0, 100.0, 0.0, 0.0};
  CHECK_THROWS_AS(baseline_predict_unseen(pts, preds, t, data::Variable::kPrecip),
                  std::invalid_argument);

  const auto pts9 = spread_points(9, rng);
  std::vector<std::vector<double>> rain(9);
  for (int s = 0; s < 9; ++s)
    for (int d = 0; d < 15; ++d)
      rain[static_cast<std::size_t>(s)].push_back(rng.uniform() < 0.4 ? rng.gamma(2.0, 2.0) : 0.0);
  const auto out = baseline_predict_unseen(pts9, rain, t, data::Variable::kPrecip);
  for (double v : out) CHECK(v >= 0.0);
}

TEST_CASE("lapse-rate world interpolates held-out sites within half a degree") {
  Rng rng(23);
  auto field = [](double lon, double lat) { return 12.0 + 1.5 * std::sin(0.7 * lon) - 0.8 * std::cos(0.5 * lat); };
  std::vector<SitePoint> stations = spread_points(25, rng);
  const int n_days = 30;
  std::vector<std::vector<double>> preds(stations.size());
  for (std::size_t s = 0; s < stations.size(); ++s) {
    for (int d = 0; d < n_days; ++d) {
      const double seasonal = 3.0 * std::sin(0.2 * d);
      preds[s].push_back(field(stations[s].lon, stations[s].lat) + seasonal -
                         6.5e-3 * stations[s].elev);
    }
  }
  Rng held(24);
  double mae = 0.0;
  const int n_targets = 5;
  for (int t = 0; t < n_targets; ++t) {
    TargetSite target;
    target.lon = held.uniform(1, 5);
    target.lat = held.uniform(41, 45);
    target.elev = held.uniform(0, 2000);
    const auto series = baseline_predict_unseen(stations, preds, target, data::Variable::kTmax);
    for (int d = 0; d < n_days; ++d) {
      const double truth = field(target.lon, target.lat) + 3.0 * std::sin(0.2 * d) -
                           6.5e-3 * target.elev;
      mae += std::fabs(series[static_cast<std::size_t>(d)] - truth);
    }
  }
  mae /= n_targets * n_days;
  CHECK(mae < 0.5);
}
