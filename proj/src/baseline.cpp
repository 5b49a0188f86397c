#include "dcnp/baseline.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numeric>

namespace dcnp::baseline {

namespace {

Eigen::MatrixXd with_intercept(const Tensor& X) {
  if (X.rank() != 2) throw std::invalid_argument("design matrix must be [n, p]");
  const int n = X.extent(0), p = X.extent(1);
  Eigen::MatrixXd M(n, p + 1);
  for (int i = 0; i < n; ++i) {
    M(i, 0) = 1.0;
    for (int j = 0; j < p; ++j) M(i, j + 1) = X(i, j);
  }
  return M;
}

std::vector<std::string> default_names(int p, std::vector<std::string> names) {
  if (names.empty()) {
    for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  }
  if (static_cast<int>(names.size()) != p) {
    throw std::invalid_argument("predictor name count does not match design matrix");
  }
  return names;
}

double logistic_fn(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double StationRegressor::linear(const std::vector<double>& x) const {
  if (x.size() + 1 != coefficients.size()) {
    throw std::invalid_argument("StationRegressor: feature count mismatch");
  }
  double v = coefficients[0];
  for (std::size_t j = 0; j < x.size(); ++j) v += coefficients[j + 1] * x[j];
  return v;
}

double StationRegressor::predict(const std::vector<double>& x) const {
  const double eta = linear(x);
  switch (kind) {
    case RegressorKind::kMlr: return eta;
    case RegressorKind::kLogistic: return logistic_fn(eta);
    case RegressorKind::kGammaGlm: return std::exp(eta);
  }
  return eta;
}

StationRegressor fit_mlr(const Tensor& X, const std::vector<double>& y,
                         std::vector<std::string> predictor_names) {
  const int n = X.extent(0), p = X.extent(1);
  if (static_cast<int>(y.size()) != n) throw std::invalid_argument("fit_mlr: row count mismatch");
  if (n <= p + 1) throw std::invalid_argument("fit_mlr: need more rows than coefficients");
  StationRegressor model;
  model.kind = RegressorKind::kMlr;
  model.predictor_names = default_names(p, std::move(predictor_names));

  const Eigen::MatrixXd M = with_intercept(X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    // The trailing permuted columns are the linearly dependent ones.
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p + 1; ++k) {
      const int col = perm(k);
      if (!cols.empty()) cols += ", ";
      cols += col == 0 ? std::string("intercept") : model.predictor_names[col - 1];
    }
    throw std::invalid_argument("fit_mlr: rank-deficient design matrix; dependent columns: " +
                                cols);
  }
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::VectorXd beta = qr.solve(yv);
  model.coefficients.assign(beta.data(), beta.data() + p + 1);
  return model;
}

StationRegressor fit_logistic(const Tensor& X, const std::vector<bool>& wet,
                              std::vector<std::string> predictor_names) {
  const int n = X.extent(0), p = X.extent(1);
  if (static_cast<int>(wet.size()) != n) {
    throw std::invalid_argument("fit_logistic: row count mismatch");
  }
  int n_wet = 0;
  for (bool w : wet) n_wet += w ? 1 : 0;
  if (n_wet == 0 || n_wet == n) {
    throw std::invalid_argument("fit_logistic: both classes must be present");
  }
  StationRegressor model;
  model.kind = RegressorKind::kLogistic;
  model.predictor_names = default_names(p, std::move(predictor_names));

  const Eigen::MatrixXd M = with_intercept(X);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) yv(i) = wet[i] ? 1.0 : 0.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  double prev_ll = -1e300;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = M * beta;
    Eigen::VectorXd mu(n), w(n), z(n);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      mu(i) = logistic_fn(eta(i));
      const double wi = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
      w(i) = wi;
      z(i) = eta(i) + (yv(i) - mu(i)) / wi;
      ll += yv(i) * std::log(std::max(mu(i), 1e-300)) +
            (1.0 - yv(i)) * std::log(std::max(1.0 - mu(i), 1e-300));
    }
    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd Mw = sw.asDiagonal() * M;
    const Eigen::VectorXd zw = sw.asDiagonal() * z;
    beta = Mw.colPivHouseholderQr().solve(zw);
    if (beta.norm() > 1e3) {
      model.separation_flagged = true;
      break;
    }
    if (ll - prev_ll < 1e-10 && iter > 0) break;
    prev_ll = ll;
  }
  model.coefficients.assign(beta.data(), beta.data() + p + 1);
  return model;
}

StationRegressor fit_gamma_glm(const Tensor& X, const std::vector<double>& y,
                               std::vector<std::string> predictor_names) {
  const int n = X.extent(0), p = X.extent(1);
  if (static_cast<int>(y.size()) != n) {
    throw std::invalid_argument("fit_gamma_glm: row count mismatch");
  }
  double ymean = 0.0;
  for (double v : y) {
    if (v <= 0.0) throw std::invalid_argument("fit_gamma_glm: responses must be positive");
    ymean += v;
  }
  ymean /= n;
  StationRegressor model;
  model.kind = RegressorKind::kGammaGlm;
  model.predictor_names = default_names(p, std::move(predictor_names));

  const Eigen::MatrixXd M = with_intercept(X);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  beta(0) = std::log(ymean);
  double prev_dev = 1e300;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = M * beta;
    Eigen::VectorXd z(n);
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double mu = std::exp(std::min(eta(i), 700.0));
      z(i) = eta(i) + (y[i] - mu) / mu;
      dev += 2.0 * ((y[i] - mu) / mu - std::log(y[i] / mu));
    }
    // Log link and gamma variance give unit IRLS weights.
    beta = M.colPivHouseholderQr().solve(z);
    if (std::fabs(prev_dev - dev) < 1e-10 * (std::fabs(dev) + 1.0)) break;
    prev_dev = dev;
  }
  const Eigen::VectorXd eta = M * beta;
  double pearson = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mu = std::exp(eta(i));
    const double r = (y[i] - mu) / mu;
    pearson += r * r;
  }
  model.dispersion = pearson / std::max(n - (p + 1), 1);
  model.coefficients.assign(beta.data(), beta.data() + p + 1);
  return model;
}

namespace {

std::array<double, 3> scaled(const SitePoint& p, double elev_scale) {
  return {p.lon, p.lat, p.elev / elev_scale};
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

SplineModel tps_fit(const std::vector<SitePoint>& points, const std::vector<double>& values,
                    double elev_scale) {
  const int n = static_cast<int>(points.size());
  if (n < 5) throw std::invalid_argument("tps_fit: need at least 5 points");
  if (values.size() != points.size()) throw std::invalid_argument("tps_fit: value count mismatch");
  SplineModel model;
  model.elev_scale = elev_scale;
  for (const SitePoint& p : points) model.centers.push_back(scaled(p, elev_scale));

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 4, n + 4);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 4);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = -dist3(model.centers[i], model.centers[j]);
    A(i, n + 0) = 1.0;
    A(i, n + 1) = model.centers[i][0];
    A(i, n + 2) = model.centers[i][1];
    A(i, n + 3) = model.centers[i][2];
    A(n + 0, i) = 1.0;
    A(n + 1, i) = model.centers[i][0];
    A(n + 2, i) = model.centers[i][1];
    A(n + 3, i) = model.centers[i][2];
    rhs(i) = values[i];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) {
    throw numeric_error("tps_fit: singular interpolation system (coincident or coplanar points)");
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  model.weights.assign(sol.data(), sol.data() + n);
  for (int k = 0; k < 4; ++k) model.polynomial[k] = sol(n + k);
  return model;
}

double tps_eval(const SplineModel& model, const SitePoint& p) {
  const std::array<double, 3> x = scaled(p, model.elev_scale);
  double v = model.polynomial[0] + model.polynomial[1] * x[0] + model.polynomial[2] * x[1] +
             model.polynomial[3] * x[2];
  for (std::size_t i = 0; i < model.centers.size(); ++i) {
    v += model.weights[i] * -dist3(model.centers[i], x);
  }
  return v;
}

namespace {

double eq_kernel(const SitePoint& a, const SitePoint& b, const GpHyper& h) {
  const double dl = (a.lon - b.lon) / h.l_lon;
  const double dm = (a.lat - b.lat) / h.l_lat;
  const double de = (a.elev - b.elev) / h.l_elev;
  return h.signal_var * std::exp(-0.5 * (dl * dl + dm * dm + de * de));
}

// In-place lower Cholesky of a row-major n*n matrix; returns false if a
// pivot fails.
bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
    for (int j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
  }
  return true;
}

void chol_solve(const std::vector<double>& L, int n, std::vector<double>& x) {
  for (int i = 0; i < n; ++i) {
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= L[i * n + k] * x[k];
    x[i] = s / L[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < n; ++k) s -= L[k * n + i] * x[k];
    x[i] = s / L[i * n + i];
  }
}

GpHyper resolve_signal(const std::vector<double>& values, GpHyper hyper) {
  if (hyper.signal_var <= 0.0) {
    double m = 0.0;
    for (double v : values) m += v;
    m /= values.size();
    double var = 0.0;
    for (double v : values) var += (v - m) * (v - m);
    var /= values.size();
    hyper.signal_var = std::max(var, 1e-12);
  }
  return hyper;
}

}  // namespace

GpModel gp_fit(const std::vector<SitePoint>& points, const std::vector<double>& values,
               GpHyper hyper) {
  const int n = static_cast<int>(points.size());
  if (n == 0 || values.size() != points.size()) {
    throw std::invalid_argument("gp_fit: bad inputs");
  }
  GpModel model;
  model.hyper = resolve_signal(values, hyper);
  model.inputs = points;
  model.targets = values;

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> K(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        K[i * n + j] = eq_kernel(points[i], points[j], model.hyper);
        if (i == j) K[i * n + j] += model.hyper.noise;
      }
    if (cholesky(K, n)) {
      model.chol = std::move(K);
      model.alpha = values;
      chol_solve(model.chol, n, model.alpha);
      return model;
    }
    model.hyper.noise *= 10.0;
  }
  throw numeric_error("gp_fit: covariance factorization failed even after nugget increase");
}

GpPrediction gp_predict(const GpModel& model, const SitePoint& p) {
  const int n = static_cast<int>(model.inputs.size());
  std::vector<double> k(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) k[i] = eq_kernel(model.inputs[i], p, model.hyper);
  GpPrediction out;
  for (int i = 0; i < n; ++i) out.mean += k[i] * model.alpha[i];
  // v = L^{-1} k, then var = k(p,p) - v'v.
  std::vector<double> v = k;
  for (int i = 0; i < n; ++i) {
    double s = v[i];
    for (int j = 0; j < i; ++j) s -= model.chol[i * n + j] * v[j];
    v[i] = s / model.chol[i * n + i];
  }
  double quad = 0.0;
  for (int i = 0; i < n; ++i) quad += v[i] * v[i];
  out.variance = std::max(model.hyper.signal_var - quad, 0.0);
  return out;
}

double gp_log_marginal(const std::vector<SitePoint>& points, const std::vector<double>& values,
                       const GpHyper& hyper) {
  const GpModel model = gp_fit(points, values, hyper);
  const int n = static_cast<int>(points.size());
  double quad = 0.0, logdet = 0.0;
  for (int i = 0; i < n; ++i) {
    quad += values[i] * model.alpha[i];
    logdet += 2.0 * std::log(model.chol[i * n + i]);
  }
  return -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
}

GpHyper gp_refine_hyper(const std::vector<SitePoint>& points, const std::vector<double>& values,
                        GpHyper hyper, int rounds) {
  hyper = resolve_signal(values, hyper);
  double best = gp_log_marginal(points, values, hyper);
  const double steps[2] = {0.5, 2.0};
  for (int r = 0; r < rounds; ++r) {
    for (int dim = 0; dim < 4; ++dim) {
      for (double mult : steps) {
        GpHyper trial = hyper;
        double* field = dim == 0   ? &trial.l_lon
                        : dim == 1 ? &trial.l_lat
                        : dim == 2 ? &trial.l_elev
                                   : &trial.signal_var;
        *field *= mult;
        try {
          const double ll = gp_log_marginal(points, values, trial);
          if (ll > best) {
            best = ll;
            hyper = trial;
          }
        } catch (const numeric_error&) {
          // Skip hyperparameters that break the factorization.
        }
      }
    }
  }
  return hyper;
}

std::vector<double> baseline_predict_unseen(const std::vector<SitePoint>& stations,
                                            const std::vector<std::vector<double>>& predictions,
                                            const TargetSite& target, data::Variable variable,
                                            const GpHyper& hyper, double elev_scale) {
  const std::size_t S = stations.size();
  if (S < 5) throw std::invalid_argument("baseline_predict_unseen: need at least 5 stations");
  if (predictions.size() != S) {
    throw std::invalid_argument("baseline_predict_unseen: prediction/station count mismatch");
  }
  const std::size_t n_days = predictions.front().size();
  if (n_days == 0) throw std::invalid_argument("baseline_predict_unseen: empty month");
  for (const auto& p : predictions) {
    if (p.size() != n_days) {
      throw std::invalid_argument("baseline_predict_unseen: ragged prediction series");
    }
  }
  const SitePoint target_pt{target.lon, target.lat, target.elev};

  // Monthly level: mean for temperature, total for precipitation.
  std::vector<double> level(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (double v : predictions[s]) level[s] += v;
    if (variable == data::Variable::kTmax) level[s] /= static_cast<double>(n_days);
  }
  const SplineModel spline = tps_fit(stations, level, elev_scale);
  const double target_level = tps_eval(spline, target_pt);

  // Daily anomalies: deviation from the monthly mean, or fraction of the
  // monthly total. Stations with a zero monthly total contribute zero
  // fractions.
  std::vector<double> out(n_days, 0.0);
  std::vector<double> anom(S);
  for (std::size_t d = 0; d < n_days; ++d) {
    double day_mean = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (variable == data::Variable::kTmax) {
        anom[s] = predictions[s][d] - level[s];
      } else {
        anom[s] = level[s] > 1e-12 ? predictions[s][d] / level[s] : 0.0;
      }
      day_mean += anom[s];
    }
    day_mean /= static_cast<double>(S);
    // The GP prior reverts to zero, so interpolate residuals about the
    // cross-station daily mean.
    double spread = 0.0;
    for (std::size_t s = 0; s < S; ++s) spread += (anom[s] - day_mean) * (anom[s] - day_mean);
    double target_anom = day_mean;
    if (spread / static_cast<double>(S) > 1e-16) {
      std::vector<double> residual(S);
      for (std::size_t s = 0; s < S; ++s) residual[s] = anom[s] - day_mean;
      const GpModel gp = gp_fit(stations, residual, hyper);
      target_anom += gp_predict(gp, target_pt).mean;
    }
    if (variable == data::Variable::kTmax) {
      out[d] = target_level + target_anom;
    } else {
      out[d] = std::max(target_level * target_anom, 0.0);
    }
  }
  return out;
}

Tensor closest_gridbox_features(const data::GridSeries& grids, double lon, double lat,
                                const std::vector<int>& day_indices) {
  const PredictorGrid& g0 = grids.days.front();
  // Ties at exact midpoints break toward the lower index.
  auto nearest = [](double coord, const std::vector<double>& axis) {
    const double step = axis[1] - axis[0];
    const double f = (coord - axis.front()) / step;
    long idx = static_cast<long>(std::ceil(f - 0.5));
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long>(axis.size())) idx = static_cast<long>(axis.size()) - 1;
    return static_cast<int>(idx);
  };
  const int j = nearest(lon, g0.lons);
  const int i = nearest(lat, g0.lats);
  const int C = g0.n_channels();
  Tensor X({static_cast<int>(day_indices.size()), C});
  for (std::size_t r = 0; r < day_indices.size(); ++r) {
    const PredictorGrid& g = grids.days[static_cast<std::size_t>(day_indices[r])];
    for (int c = 0; c < C; ++c) X(static_cast<int>(r), c) = g.values(i, j, c);
  }
  return X;
}

}  // namespace dcnp::baseline
