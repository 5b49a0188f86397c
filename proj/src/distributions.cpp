#include "dcnp/distributions.hpp"

#include <cmath>

namespace dcnp::dist {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // ln(2*pi)/2
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gaussian_nll(const GaussianParams& p, double y) {
  const double z = (y - p.mu) / p.sigma;
  return kHalfLog2Pi + std::log(p.sigma) + 0.5 * z * z;
}

double bernoulli_gamma_nll(const BernoulliGammaParams& p, double y, bool wet) {
  if (!wet) return -std::log1p(-p.rho);
  if (y <= 0.0) throw std::invalid_argument("bernoulli_gamma_nll: wet observation must be > 0");
  const double log_pdf =
      (p.alpha - 1.0) * std::log(y) - y / p.beta - p.alpha * std::log(p.beta) - log_gamma(p.alpha);
  return -std::log(p.rho) - log_pdf;
}

double mean(const PredictiveParams& p) {
  if (const auto* g = std::get_if<GaussianParams>(&p)) return g->mu;
  const auto& bg = std::get<BernoulliGammaParams>(p);
  return bg.rho * bg.alpha * bg.beta;
}

double det_value(const PredictiveParams& p, DetMode mode) {
  if (std::holds_alternative<GaussianParams>(p)) return std::get<GaussianParams>(p).mu;
  const auto& bg = std::get<BernoulliGammaParams>(p);
  if (mode == DetMode::kMixtureMean) return bg.rho * bg.alpha * bg.beta;
  return classify_wet(bg.rho) ? bg.alpha * bg.beta : 0.0;
}

double sample(const PredictiveParams& p, Rng& rng) {
  if (const auto* g = std::get_if<GaussianParams>(&p)) return rng.normal(g->mu, g->sigma);
  const auto& bg = std::get<BernoulliGammaParams>(p);
  if (rng.uniform() >= bg.rho) return 0.0;
  return rng.gamma(bg.alpha, bg.beta);
}

double pit(const PredictiveParams& p, double y) {
  if (const auto* g = std::get_if<GaussianParams>(&p)) {
    return normal_cdf((y - g->mu) / g->sigma);
  }
  const auto& bg = std::get<BernoulliGammaParams>(p);
  return gamma_cdf_reg(bg.alpha, y / bg.beta);
}

double log_gamma(double x) { return std::lgamma(x); }

double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return r + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) = 1 - P(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_cdf_reg(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Var apply_link(const Var& raw, Head head) {
  const int np = n_params(head);
  if (raw.value().rank() != 2 || raw.value().extent(1) != np) {
    throw std::invalid_argument("apply_link: expected [N," + std::to_string(np) + "]");
  }
  if (head == Head::kGaussian) {
    Var mu = slice_cols(raw, 0, 1);
    Var sigma = add_scalar(softplus_op(slice_cols(raw, 1, 1)), kLinkFloor);
    return concat_cols({mu, sigma});
  }
  Var rho = add_scalar(scale(sigmoid_op(slice_cols(raw, 0, 1)), 1.0 - 2.0 * kLinkFloor),
                       kLinkFloor);
  Var alpha = add_scalar(softplus_op(slice_cols(raw, 1, 1)), kLinkFloor);
  Var beta = add_scalar(softplus_op(slice_cols(raw, 2, 1)), kLinkFloor);
  return concat_cols({rho, alpha, beta});
}

Var nll_sum(const Var& linked, Head head, const std::vector<double>& y,
            const std::vector<bool>& wet) {
  const int n = linked.value().extent(0);
  if (static_cast<int>(y.size()) != n) {
    throw std::invalid_argument("nll_sum: observation count mismatch");
  }
  if (head == Head::kGaussian) {
    Var mu = slice_cols(linked, 0, 1);
    Var sigma = slice_cols(linked, 1, 1);
    Var yv = Var::constant(Tensor({n, 1}, y));
    Var r = sub(yv, mu);
    Var z2 = div(mul(r, r), mul(sigma, sigma));
    Var point = add_scalar(add(log_op(sigma), scale(z2, 0.5)), kHalfLog2Pi);
    return sum(point);
  }
  if (static_cast<int>(wet.size()) != n) {
    throw std::invalid_argument("nll_sum: wet flag count mismatch");
  }
  std::vector<double> wet_mask(static_cast<std::size_t>(n));
  std::vector<double> dry_mask(static_cast<std::size_t>(n));
  std::vector<double> log_y(static_cast<std::size_t>(n), 0.0);
  std::vector<double> y_wet(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    wet_mask[i] = wet[i] ? 1.0 : 0.0;
    dry_mask[i] = wet[i] ? 0.0 : 1.0;
    if (wet[i]) {
      if (y[i] <= 0.0) throw std::invalid_argument("nll_sum: wet observation must be > 0");
      log_y[i] = std::log(y[i]);
      y_wet[i] = y[i];
    }
  }
  Var rho = slice_cols(linked, 0, 1);
  Var alpha = slice_cols(linked, 1, 1);
  Var beta = slice_cols(linked, 2, 1);
  Var log_y_c = Var::constant(Tensor({n, 1}, log_y));
  Var y_c = Var::constant(Tensor({n, 1}, y_wet));
  // wet branch: -ln rho - (a-1) ln y + y/b + a ln b + lgamma(a)
  Var wet_nll = add(
      add(sub(div(y_c, beta), mul(add_scalar(alpha, -1.0), log_y_c)),
          add(mul(alpha, log_op(beta)), lgamma_op(alpha))),
      neg(log_op(rho)));
  // dry branch: -ln(1 - rho)
  Var dry_nll = neg(log_op(sub(Var::constant(Tensor::full({n, 1}, 1.0)), rho)));
  Var point = add(mul(wet_nll, Var::constant(Tensor({n, 1}, wet_mask))),
                  mul(dry_nll, Var::constant(Tensor({n, 1}, dry_mask))));
  return sum(point);
}

PredictiveParams params_from_row(const Tensor& linked, int row, Head head) {
  if (head == Head::kGaussian) {
    return GaussianParams{linked(row, 0), linked(row, 1)};
  }
  return BernoulliGammaParams{linked(row, 0), linked(row, 1), linked(row, 2)};
}

}  // namespace dcnp::dist
