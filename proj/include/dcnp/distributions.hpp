#pragma once

#include <variant>
#include <vector>

#include "dcnp/ops.hpp"
#include "dcnp/rng.hpp"
#include "dcnp/tensor.hpp"

namespace dcnp::dist {

enum class Head { kGaussian, kBernoulliGamma };
enum class DetMode { kGatedMean, kMixtureMean };

inline int n_params(Head h) { return h == Head::kGaussian ? 2 : 3; }

struct GaussianParams {
  double mu = 0.0;     // degrees C
  double sigma = 1.0;  // > 0
};

struct BernoulliGammaParams {
  double rho = 0.5;    // wet probability, in (0, 1)
  double alpha = 1.0;  // gamma shape, > 0
  double beta = 1.0;   // gamma scale, > 0 (mm)
};

using PredictiveParams = std::variant<GaussianParams, BernoulliGammaParams>;

// Link floor keeping sigma/alpha/beta strictly positive and rho strictly
// inside (0, 1).
inline constexpr double kLinkFloor = 1e-6;

double gaussian_nll(const GaussianParams& p, double y);
// wet => y must be > 0.
double bernoulli_gamma_nll(const BernoulliGammaParams& p, double y, bool wet);

// Expected value: mu, or rho * alpha * beta for the mixture.
double mean(const PredictiveParams& p);
// Deterministic series value. Gaussian: mu. Mixture: either the full mixture
// mean or the gamma mean gated by the wet classification.
double det_value(const PredictiveParams& p, DetMode mode);

double sample(const PredictiveParams& p, Rng& rng);

inline bool classify_wet(double rho) { return rho >= 0.5; }

// Predictive CDF at the observation. For the mixture this is the gamma CDF
// of the wet-day accumulation.
double pit(const PredictiveParams& p, double y);

// Scalar link functions (shared by the graph ops below).
double softplus(double x);
double logistic(double x);

// Special functions used by the scalar paths above.
double log_gamma(double x);
double digamma(double x);
// Regularized lower incomplete gamma P(a, x).
double gamma_cdf_reg(double a, double x);
double normal_cdf(double z);

// ---- graph ops -----------------------------------------------------------

// Maps unconstrained per-site outputs [N, n_p] to constrained parameters:
// Gaussian columns (mu, sigma), mixture columns (rho, alpha, beta).
Var apply_link(const Var& raw, Head head);

// Sum over rows of the per-point negative log-likelihood. `linked` holds
// constrained parameters as produced by apply_link. For the mixture head,
// wet[i] selects the wet branch and y[i] must then be positive.
Var nll_sum(const Var& linked, Head head, const std::vector<double>& y,
            const std::vector<bool>& wet);

// Constrained parameter row -> PredictiveParams.
PredictiveParams params_from_row(const Tensor& linked, int row, Head head);

}  // namespace dcnp::dist
