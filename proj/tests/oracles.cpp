#include "oracles.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace oracles {

using dcnp::Tensor;

Tensor conv2d_ref(const Tensor& input, const Tensor& kernel, bool padding_circular) {
  const int H = input.extent(0), W = input.extent(1), Ci = input.extent(2);
  const int kh = kernel.extent(0), kw = kernel.extent(1), Co = kernel.extent(3);
  const int ph = kh / 2, pw = kw / 2;
  Tensor out({H, W, Co});
  for (int o = 0; o < Co; ++o)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int c = 0; c < Ci; ++c)
          for (int a = 0; a < kh; ++a)
            for (int b = 0; b < kw; ++b) {
              int si = i + a - ph;
              int sj = j + b - pw;
              if (padding_circular) {
                si = ((si % H) + H) % H;
                sj = ((sj % W) + W) % W;
              } else if (si < 0 || si >= H || sj < 0 || sj >= W) {
                continue;
              }
              acc += input(si, sj, c) * kernel(a, b, c, o);
            }
        out(i, j, o) = acc;
      }
  return out;
}

Tensor dense_ref(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.extent(0), din = x.extent(1), dout = w.extent(1);
  Tensor out({n, dout});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dout; ++j) {
      double acc = b(j);
      for (int k = 0; k < din; ++k) acc += x(i, k) * w(k, j);
      out(i, j) = acc;
    }
  return out;
}

double AdamScalarRef::step(double x, double g) {
  t += 1;
  m = beta1 * m + (1 - beta1) * g;
  v = beta2 * v + (1 - beta2) * g * g;
  const double mhat = m / (1 - std::pow(beta1, static_cast<double>(t)));
  const double vhat = v / (1 - std::pow(beta2, static_cast<double>(t)));
  return x - lr * mhat / (std::sqrt(vhat) + eps);
}

double lgamma_lanczos(double x) {
  static const double g = 7.0;
  static const double coef[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                                 771.32342877765313,   -176.61502916214059, 12.507343278686905,
                                 -0.13857109526572012, 9.9843695780195716e-6,
                                 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection: lgamma(x) = ln(pi / sin(pi x)) - lgamma(1 - x).
    return std::log(M_PI / std::sin(M_PI * x)) - lgamma_lanczos(1.0 - x);
  }
  x -= 1.0;
  double a = coef[0];
  const double t = x + g + 0.5;
  for (int i = 1; i < 9; ++i) a += coef[i] / (x + i);
  return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

double gamma_pdf(double y, double alpha, double beta) {
  if (y <= 0.0) return 0.0;
  return std::exp((alpha - 1.0) * std::log(y) - y / beta - alpha * std::log(beta) -
                  lgamma_lanczos(alpha));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole,
          int depth) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lmid = 0.5 * (lo + mid);
    const double rmid = 0.5 * (mid + hi);
    const double fl = f(lmid), fr = f(rmid);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol) {
      return left + right + (left + right - whole) / 15.0;
    }
    return rec(lo, mid, flo, fl, fmid, left, depth - 1) +
           rec(mid, hi, fmid, fr, fhi, right, depth - 1);
  };
  const double mid = 0.5 * (a + b);
  const double fa = f(a), fm = f(mid), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return rec(a, b, fa, fm, fb, whole, 48);
}

double gamma_cdf_quadrature(double y, double alpha, double beta, double tol) {
  if (y <= 0.0) return 0.0;
  const auto pdf = [alpha, beta](double t) { return gamma_pdf(t, alpha, beta); };
  return adaptive_simpson(pdf, 0.0, y, tol);
}

std::vector<double> readout_ref(const Tensor& param_grid, double gx, double gy, double l1,
                                double l2, bool normalized) {
  const int H = param_grid.extent(0), W = param_grid.extent(1), P = param_grid.extent(2);
  std::vector<double> acc(static_cast<std::size_t>(P), 0.0);
  double wsum = 0.0;
  for (int m = 0; m < H; ++m)
    for (int n = 0; n < W; ++n) {
      const double dx = gx - n;
      const double dy = gy - m;
      const double w = std::exp(-dx * dx / (2.0 * l1 * l1) - dy * dy / (2.0 * l2 * l2));
      wsum += w;
      for (int p = 0; p < P; ++p) acc[static_cast<std::size_t>(p)] += w * param_grid(m, n, p);
    }
  if (normalized) {
    for (double& v : acc) v /= wsum;
  }
  return acc;
}

std::vector<double> gauss_jordan_inverse(std::vector<double> a, int n) {
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
    }
    if (std::fabs(a[pivot * n + col]) < 1e-300) {
      throw std::runtime_error("gauss_jordan_inverse: singular matrix");
    }
    if (pivot != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(a[pivot * n + c], a[col * n + c]);
        std::swap(inv[pivot * n + c], inv[col * n + c]);
      }
    }
    const double d = a[col * n + col];
    for (int c = 0; c < n; ++c) {
      a[col * n + c] /= d;
      inv[col * n + c] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        a[r * n + c] -= f * a[col * n + c];
        inv[r * n + c] -= f * inv[col * n + c];
      }
    }
  }
  return inv;
}

GpRefResult gp_posterior_ref(const std::vector<std::array<double, 3>>& x,
                             const std::vector<double>& y, const std::array<double, 3>& query,
                             const std::array<double, 3>& lengthscales, double signal_var,
                             double noise) {
  const int n = static_cast<int>(x.size());
  auto kern = [&](const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double q = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double z = (a[d] - b[d]) / lengthscales[static_cast<std::size_t>(d)];
      q += z * z;
    }
    return signal_var * std::exp(-0.5 * q);
  };
  std::vector<double> K(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K[i * n + j] = kern(x[i], x[j]) + (i == j ? noise : 0.0);
  const std::vector<double> Kinv = gauss_jordan_inverse(K, n);
  std::vector<double> ks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ks[i] = kern(x[i], query);
  GpRefResult out{0.0, 0.0};
  double quad = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += Kinv[i * n + j] * y[j];
    out.mean += ks[i] * row;
    double rowk = 0.0;
    for (int j = 0; j < n; ++j) rowk += Kinv[i * n + j] * ks[j];
    quad += ks[i] * rowk;
  }
  out.variance = signal_var - quad;
  return out;
}

std::vector<double> normal_equations_ref(const Tensor& X, const std::vector<double>& y) {
  const int n = X.extent(0), p = X.extent(1);
  const int m = p + 1;
  std::vector<double> xtx(static_cast<std::size_t>(m) * m, 0.0);
  std::vector<double> xty(static_cast<std::size_t>(m), 0.0);
  auto feat = [&X](int row, int col) { return col == 0 ? 1.0 : X(row, col - 1); };
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < m; ++i) {
      xty[i] += feat(r, i) * y[static_cast<std::size_t>(r)];
      for (int j = 0; j < m; ++j) xtx[i * m + j] += feat(r, i) * feat(r, j);
    }
  }
  const std::vector<double> inv = gauss_jordan_inverse(xtx, m);
  std::vector<double> beta(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) beta[i] += inv[i * m + j] * xty[j];
  return beta;
}

}  // namespace oracles
