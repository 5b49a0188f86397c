#pragma once

#include <array>
#include <string>
#include <vector>

#include "dcnp/data.hpp"
#include "dcnp/grid.hpp"
#include "dcnp/tensor.hpp"

namespace dcnp::baseline {

enum class RegressorKind { kMlr, kLogistic, kGammaGlm };

// Per-station regression model. Coefficients are [intercept, b1..bp] over
// the named predictors.
struct StationRegressor {
  RegressorKind kind = RegressorKind::kMlr;
  std::vector<double> coefficients;
  std::vector<std::string> predictor_names;
  bool separation_flagged = false;  // logistic fit diverged (complete separation)
  double dispersion = 0.0;          // gamma GLM moment estimate

  double linear(const std::vector<double>& x) const;
  // Model-scale prediction: identity (mlr), probability (logistic), or
  // exp-link mean (gamma).
  double predict(const std::vector<double>& x) const;
};

// Ordinary least squares through a column-pivoted QR. X is [n, p] without
// an intercept column. Throws on rank deficiency, naming the offending
// columns.
StationRegressor fit_mlr(const Tensor& X, const std::vector<double>& y,
                         std::vector<std::string> predictor_names = {});

// Bernoulli log-likelihood maximized by IRLS. Diverging coefficients mark
// the model as separated instead of throwing.
StationRegressor fit_logistic(const Tensor& X, const std::vector<bool>& wet,
                              std::vector<std::string> predictor_names = {});

// Log-link gamma GLM via IRLS plus a moment estimate of the dispersion.
StationRegressor fit_gamma_glm(const Tensor& X, const std::vector<double>& y,
                               std::vector<std::string> predictor_names = {});

// Thin-plate interpolation over (lon, lat, elev/elev_scale) with kernel
// phi(r) = -r and an affine tail; smoothing parameter 0.
struct SplineModel {
  std::vector<std::array<double, 3>> centers;  // scaled coordinates
  std::vector<double> weights;
  std::array<double, 4> polynomial{};  // 1, x, y, z
  double elev_scale = 1000.0;
};

struct SitePoint {
  double lon = 0.0;
  double lat = 0.0;
  double elev = 0.0;
};

SplineModel tps_fit(const std::vector<SitePoint>& points, const std::vector<double>& values,
                    double elev_scale = 1000.0);
double tps_eval(const SplineModel& model, const SitePoint& p);

struct GpHyper {
  double l_lon = 2.0;     // degrees
  double l_lat = 2.0;     // degrees
  double l_elev = 500.0;  // m
  double signal_var = 0.0;  // <= 0 means: use the sample variance of the targets
  double noise = 1e-6;
};

struct GpModel {
  GpHyper hyper;
  std::vector<SitePoint> inputs;
  std::vector<double> targets;
  std::vector<double> chol;   // lower factor of K + noise*I, row-major n*n
  std::vector<double> alpha;  // (K + noise*I)^{-1} y
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Zero-mean GP regression with an anisotropic EQ kernel over
// (lon, lat, elev). A failed factorization retries once with a 10x nugget.
GpModel gp_fit(const std::vector<SitePoint>& points, const std::vector<double>& values,
               GpHyper hyper = {});
GpPrediction gp_predict(const GpModel& model, const SitePoint& p);

// Optional coordinate-descent refinement of the kernel lengthscales and
// signal variance by marginal likelihood.
GpHyper gp_refine_hyper(const std::vector<SitePoint>& points, const std::vector<double>& values,
                        GpHyper hyper, int rounds = 2);
double gp_log_marginal(const std::vector<SitePoint>& points, const std::vector<double>& values,
                       const GpHyper& hyper);

// Interpolates one month of per-station predicted series to a target site:
// thin-plate spline of the monthly mean (temperature) or total
// (precipitation), plus a per-day GP over the daily anomalies (fraction of
// the monthly total for precipitation, clipped at zero).
std::vector<double> baseline_predict_unseen(const std::vector<SitePoint>& stations,
                                            const std::vector<std::vector<double>>& predictions,
                                            const TargetSite& target, data::Variable variable,
                                            const GpHyper& hyper = {}, double elev_scale = 1000.0);

// Feature rows for the single-site regressions: channel values at the grid
// box closest to the station (ties break toward the lower index).
Tensor closest_gridbox_features(const data::GridSeries& grids, double lon, double lat,
                                const std::vector<int>& day_indices);

}  // namespace dcnp::baseline
