#include "dcnp/ops.hpp"

#include <cmath>

namespace dcnp {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a.value().shape()) + " vs " +
                                shape_string(b.value().shape()));
  }
}

template <typename Fwd, typename Bwd>
Var binary_op(const Var& a, const Var& b, const char* name, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  const int n = a.value().size();
  Tensor out(a.value().shape());
  for (int i = 0; i < n; ++i) out[i] = fwd(a.value()[i], b.value()[i]);
  return make_op(std::move(out), {a, b}, [bwd, n](Node& node) {
    Node* pa = node.parents[0].node();
    Node* pb = node.parents[1].node();
    const bool ga = pa->requires_grad;
    const bool gb = pb->requires_grad;
    if (ga) pa->ensure_grad();
    if (gb) pb->ensure_grad();
    for (int i = 0; i < n; ++i) {
      double da, dbv;
      bwd(pa->value[i], pb->value[i], node.value[i], da, dbv);
      const double g = node.grad[i];
      if (ga) pa->grad[i] += g * da;
      if (gb) pb->grad[i] += g * dbv;
    }
  });
}

// df receives (x, y) with y = f(x).
template <typename Fwd, typename Df>
Var unary_op(const Var& x, Fwd fwd, Df df) {
  const int n = x.value().size();
  Tensor out(x.value().shape());
  for (int i = 0; i < n; ++i) out[i] = fwd(x.value()[i]);
  return make_op(std::move(out), {x}, [df, n](Node& node) {
    Node* p = node.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < n; ++i) p->grad[i] += node.grad[i] * df(p->value[i], node.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                   [](double, double, double, double& da, double& db) {
                     da = 1.0;
                     db = 1.0;
                   });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                   [](double, double, double, double& da, double& db) {
                     da = 1.0;
                     db = -1.0;
                   });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                   [](double x, double y, double, double& da, double& db) {
                     da = y;
                     db = x;
                   });
}

Var div(const Var& a, const Var& b) {
  return binary_op(a, b, "div", [](double x, double y) { return x / y; },
                   [](double x, double y, double, double& da, double& db) {
                     da = 1.0 / y;
                     db = -x / (y * y);
                   });
}

Var guarded_div(const Var& num, const Var& den) {
  return binary_op(num, den, "guarded_div",
                   [](double x, double y) { return y == 0.0 ? 0.0 : x / y; },
                   [](double x, double y, double, double& da, double& db) {
                     if (y == 0.0) {
                       da = 0.0;
                       db = 0.0;
                     } else {
                       da = 1.0 / y;
                       db = -x / (y * y);
                     }
                   });
}

Var scale(const Var& x, double c) {
  return unary_op(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& x, double c) {
  return unary_op(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var relu_op(const Var& x) {
  return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
double softplus_val(double v) {
  // log(1 + e^v), overflow-safe.
  if (v > 30.0) return v;
  if (v < -30.0) return std::exp(v);
  return std::log1p(std::exp(v));
}
double sigmoid_val(double v) {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Var softplus_op(const Var& x) {
  return unary_op(x, softplus_val, [](double v, double) { return sigmoid_val(v); });
}

Var sigmoid_op(const Var& x) {
  return unary_op(x, sigmoid_val, [](double, double y) { return y * (1.0 - y); });
}

Var exp_op(const Var& x) {
  return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log_op(const Var& x) {
  return unary_op(x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

namespace {
// Digamma by recurrence into the asymptotic region.
double digamma_val(double x) {
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
}  // namespace

Var lgamma_op(const Var& x) {
  return unary_op(x, [](double v) { return std::lgamma(v); },
                  [](double v, double) { return digamma_val(v); });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (int i = 0; i < x.value().size(); ++i) s += x.value()[i];
  return make_op(Tensor::scalar(s), {x}, [](Node& node) {
    Node* p = node.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = node.grad(0);
    for (int i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / x.value().size()); }

Var dense(const Var& x, const Var& weights, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1) {
    throw std::invalid_argument("dense: expected x[N,Din], w[Din,Dout], b[Dout]");
  }
  const int n = xv.extent(0), din = xv.extent(1), dout = wv.extent(1);
  if (wv.extent(0) != din || bv.extent(0) != dout) {
    throw std::invalid_argument("dense: dimension mismatch x" + shape_string(xv.shape()) + " w" +
                                shape_string(wv.shape()) + " b" + shape_string(bv.shape()));
  }
  Tensor out({n, dout});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < dout; ++c) out(r, c) = bv(c);
    for (int k = 0; k < din; ++k) {
      const double xv_rk = xv(r, k);
      const double* wrow = wv.data() + k * dout;
      double* orow = out.data() + r * dout;
      for (int c = 0; c < dout; ++c) orow[c] += xv_rk * wrow[c];
    }
  }
  return make_op(std::move(out), {x, weights, bias}, [n, din, dout](Node& node) {
    Node* px = node.parents[0].node();
    Node* pw = node.parents[1].node();
    Node* pb = node.parents[2].node();
    if (px->requires_grad) {
      px->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int k = 0; k < din; ++k) {
          double s = 0.0;
          const double* wrow = pw->value.data() + k * dout;
          const double* grow = node.grad.data() + r * dout;
          for (int c = 0; c < dout; ++c) s += wrow[c] * grow[c];
          px->grad(r, k) += s;
        }
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int k = 0; k < din; ++k) {
          const double xv_rk = px->value(r, k);
          double* wg = pw->grad.data() + k * dout;
          const double* grow = node.grad.data() + r * dout;
          for (int c = 0; c < dout; ++c) wg[c] += xv_rk * grow[c];
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < dout; ++c) pb->grad(c) += node.grad(r, c);
    }
  });
}

namespace {

// Maps a window index onto the grid; returns false for out-of-range under
// zero padding.
inline bool map_index(int i, int extent, Padding padding, int& out) {
  if (i >= 0 && i < extent) {
    out = i;
    return true;
  }
  if (padding == Padding::kZero) return false;
  out = ((i % extent) + extent) % extent;
  return true;
}

void check_conv_pre(const Tensor& in, const Tensor& k, int expect_rank, const char* op) {
  if (in.rank() != 3) throw std::invalid_argument(std::string(op) + ": input must be [H,W,C]");
  if (k.rank() != expect_rank) {
    throw std::invalid_argument(std::string(op) + ": bad kernel rank " +
                                shape_string(k.shape()));
  }
  if (k.extent(0) % 2 == 0 || k.extent(1) % 2 == 0) {
    throw std::invalid_argument(std::string(op) + ": kernel extents must be odd");
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, Padding padding) {
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  check_conv_pre(in, k, 4, "conv2d");
  const int H = in.extent(0), W = in.extent(1), ci = in.extent(2);
  const int kh = k.extent(0), kw = k.extent(1), co = k.extent(3);
  if (k.extent(2) != ci) {
    throw std::invalid_argument("conv2d: kernel channels " + shape_string(k.shape()) +
                                " do not match input " + shape_string(in.shape()));
  }
  const int ph = kh / 2, pw = kw / 2;
  Tensor out({H, W, co});
  for (int i = 0; i < H; ++i)
    for (int a = 0; a < kh; ++a) {
      int si;
      if (!map_index(i + a - ph, H, padding, si)) continue;
      for (int j = 0; j < W; ++j) {
        double* orow = out.data() + (i * W + j) * co;
        for (int b = 0; b < kw; ++b) {
          int sj;
          if (!map_index(j + b - pw, W, padding, sj)) continue;
          const double* irow = in.data() + (si * W + sj) * ci;
          const double* krow = k.data() + (a * kw + b) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const double iv = irow[c];
            const double* kk = krow + c * co;
            for (int o = 0; o < co; ++o) orow[o] += iv * kk[o];
          }
        }
      }
    }
  return make_op(std::move(out), {input, kernel}, [H, W, ci, kh, kw, co, ph, pw,
                                                   padding](Node& node) {
    Node* pi = node.parents[0].node();
    Node* pk = node.parents[1].node();
    const bool gi = pi->requires_grad, gk = pk->requires_grad;
    if (gi) pi->ensure_grad();
    if (gk) pk->ensure_grad();
    for (int i = 0; i < H; ++i)
      for (int a = 0; a < kh; ++a) {
        int si;
        if (!map_index(i + a - ph, H, padding, si)) continue;
        for (int j = 0; j < W; ++j) {
          const double* grow = node.grad.data() + (i * W + j) * co;
          for (int b = 0; b < kw; ++b) {
            int sj;
            if (!map_index(j + b - pw, W, padding, sj)) continue;
            const double* irow = pi->value.data() + (si * W + sj) * ci;
            double* igrow = gi ? pi->grad.data() + (si * W + sj) * ci : nullptr;
            const int koff = (a * kw + b) * ci * co;
            for (int c = 0; c < ci; ++c) {
              const double* kk = pk->value.data() + koff + c * co;
              double s = 0.0;
              if (gk) {
                double* kg = pk->grad.data() + koff + c * co;
                const double iv = irow[c];
                for (int o = 0; o < co; ++o) {
                  s += kk[o] * grow[o];
                  kg[o] += iv * grow[o];
                }
              } else {
                for (int o = 0; o < co; ++o) s += kk[o] * grow[o];
              }
              if (gi) igrow[c] += s;
            }
          }
        }
      }
  });
}

Var conv2d_depthwise(const Var& input, const Var& kernel, Padding padding) {
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  check_conv_pre(in, k, 3, "conv2d_depthwise");
  const int H = in.extent(0), W = in.extent(1), C = in.extent(2);
  const int kh = k.extent(0), kw = k.extent(1);
  if (k.extent(2) != C) {
    throw std::invalid_argument("conv2d_depthwise: kernel channels do not match input");
  }
  const int ph = kh / 2, pw = kw / 2;
  Tensor out({H, W, C});
  for (int i = 0; i < H; ++i)
    for (int a = 0; a < kh; ++a) {
      int si;
      if (!map_index(i + a - ph, H, padding, si)) continue;
      for (int j = 0; j < W; ++j) {
        double* orow = out.data() + (i * W + j) * C;
        for (int b = 0; b < kw; ++b) {
          int sj;
          if (!map_index(j + b - pw, W, padding, sj)) continue;
          const double* irow = in.data() + (si * W + sj) * C;
          const double* krow = k.data() + (a * kw + b) * C;
          for (int c = 0; c < C; ++c) orow[c] += irow[c] * krow[c];
        }
      }
    }
  return make_op(std::move(out), {input, kernel},
                 [H, W, C, kh, kw, ph, pw, padding](Node& node) {
                   Node* pi = node.parents[0].node();
                   Node* pk = node.parents[1].node();
                   const bool gi = pi->requires_grad, gk = pk->requires_grad;
                   if (gi) pi->ensure_grad();
                   if (gk) pk->ensure_grad();
                   for (int i = 0; i < H; ++i)
                     for (int a = 0; a < kh; ++a) {
                       int si;
                       if (!map_index(i + a - ph, H, padding, si)) continue;
                       for (int j = 0; j < W; ++j) {
                         const double* grow = node.grad.data() + (i * W + j) * C;
                         for (int b = 0; b < kw; ++b) {
                           int sj;
                           if (!map_index(j + b - pw, W, padding, sj)) continue;
                           const double* irow = pi->value.data() + (si * W + sj) * C;
                           const double* krow = pk->value.data() + (a * kw + b) * C;
                           double* igrow = gi ? pi->grad.data() + (si * W + sj) * C : nullptr;
                           double* kgrow = gk ? pk->grad.data() + (a * kw + b) * C : nullptr;
                           for (int c = 0; c < C; ++c) {
                             if (gi) igrow[c] += krow[c] * grow[c];
                             if (gk) kgrow[c] += irow[c] * grow[c];
                           }
                         }
                       }
                     }
                 });
}

Var conv2d_shared(const Var& input, const Var& kernel, Padding padding) {
  const Tensor& in = input.value();
  const Tensor& k = kernel.value();
  check_conv_pre(in, k, 2, "conv2d_shared");
  const int H = in.extent(0), W = in.extent(1), C = in.extent(2);
  const int kh = k.extent(0), kw = k.extent(1);
  const int ph = kh / 2, pw = kw / 2;
  Tensor out({H, W, C});
  for (int i = 0; i < H; ++i)
    for (int a = 0; a < kh; ++a) {
      int si;
      if (!map_index(i + a - ph, H, padding, si)) continue;
      for (int j = 0; j < W; ++j) {
        double* orow = out.data() + (i * W + j) * C;
        for (int b = 0; b < kw; ++b) {
          int sj;
          if (!map_index(j + b - pw, W, padding, sj)) continue;
          const double* irow = in.data() + (si * W + sj) * C;
          const double kv = k(a, b);
          for (int c = 0; c < C; ++c) orow[c] += irow[c] * kv;
        }
      }
    }
  return make_op(std::move(out), {input, kernel},
                 [H, W, C, kh, kw, ph, pw, padding](Node& node) {
                   Node* pi = node.parents[0].node();
                   Node* pk = node.parents[1].node();
                   const bool gi = pi->requires_grad, gk = pk->requires_grad;
                   if (gi) pi->ensure_grad();
                   if (gk) pk->ensure_grad();
                   for (int i = 0; i < H; ++i)
                     for (int a = 0; a < kh; ++a) {
                       int si;
                       if (!map_index(i + a - ph, H, padding, si)) continue;
                       for (int j = 0; j < W; ++j) {
                         const double* grow = node.grad.data() + (i * W + j) * C;
                         for (int b = 0; b < kw; ++b) {
                           int sj;
                           if (!map_index(j + b - pw, W, padding, sj)) continue;
                           const double* irow = pi->value.data() + (si * W + sj) * C;
                           double* igrow = gi ? pi->grad.data() + (si * W + sj) * C : nullptr;
                           const double kv = pk->value(a, b);
                           double ks = 0.0;
                           for (int c = 0; c < C; ++c) {
                             if (gi) igrow[c] += kv * grow[c];
                             ks += irow[c] * grow[c];
                           }
                           if (gk) pk->grad(a, b) += ks;
                         }
                       }
                     }
                 });
}

Var depthwise_separable_conv(const Var& input, const Var& depth_kernel, const Var& point_kernel,
                             Padding padding) {
  const Tensor& pk = point_kernel.value();
  if (pk.rank() != 4 || pk.extent(0) != 1 || pk.extent(1) != 1) {
    throw std::invalid_argument("depthwise_separable_conv: point kernel must be [1,1,C,Cout]");
  }
  return conv2d(conv2d_depthwise(input, depth_kernel, padding), point_kernel, padding);
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 3 || bv.rank() != 1 || bv.extent(0) != xv.extent(2)) {
    throw std::invalid_argument("add_channel_bias: expected x[H,W,C], b[C]");
  }
  const int hw = xv.extent(0) * xv.extent(1), C = xv.extent(2);
  Tensor out(xv.shape());
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < C; ++c) out[p * C + c] = xv[p * C + c] + bv(c);
  return make_op(std::move(out), {x, bias}, [hw, C](Node& node) {
    Node* px = node.parents[0].node();
    Node* pb = node.parents[1].node();
    if (px->requires_grad) {
      px->ensure_grad();
      for (int i = 0; i < hw * C; ++i) px->grad[i] += node.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < C; ++c) pb->grad(c) += node.grad[p * C + c];
    }
  });
}

Var slice_cols(const Var& x, int first, int count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("slice_cols: expected [N,D]");
  const int n = xv.extent(0), d = xv.extent(1);
  if (first < 0 || count <= 0 || first + count > d) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  Tensor out({n, count});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < count; ++c) out(r, c) = xv(r, first + c);
  return make_op(std::move(out), {x}, [n, d, first, count](Node& node) {
    Node* p = node.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < count; ++c) p->grad(r, first + c) += node.grad(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int n = parts[0].value().extent(0);
  int total = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().extent(0) != n) {
      throw std::invalid_argument("concat_cols: row mismatch");
    }
    total += p.value().extent(1);
  }
  Tensor out({n, total});
  int off = 0;
  for (const Var& p : parts) {
    const int d = p.value().extent(1);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < d; ++c) out(r, off + c) = p.value()(r, c);
    off += d;
  }
  return make_op(std::move(out), parts, [n](Node& node) {
    int off = 0;
    for (Var& pv : node.parents) {
      Node* p = pv.node();
      const int d = p->value.extent(1);
      if (p->requires_grad) {
        p->ensure_grad();
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < d; ++c) p->grad(r, c) += node.grad(r, off + c);
      }
      off += d;
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.extent(0) != bv.extent(0) ||
      av.extent(1) != bv.extent(1)) {
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  }
  const int hw = av.extent(0) * av.extent(1);
  const int ca = av.extent(2), cb = bv.extent(2);
  Tensor out({av.extent(0), av.extent(1), ca + cb});
  for (int p = 0; p < hw; ++p) {
    for (int c = 0; c < ca; ++c) out[p * (ca + cb) + c] = av[p * ca + c];
    for (int c = 0; c < cb; ++c) out[p * (ca + cb) + ca + c] = bv[p * cb + c];
  }
  return make_op(std::move(out), {a, b}, [hw, ca, cb](Node& node) {
    Node* pa = node.parents[0].node();
    Node* pb = node.parents[1].node();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < ca; ++c) pa->grad[p * ca + c] += node.grad[p * (ca + cb) + c];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int p = 0; p < hw; ++p)
        for (int c = 0; c < cb; ++c) pb->grad[p * cb + c] += node.grad[p * (ca + cb) + ca + c];
    }
  });
}

double scalar_value(const Var& x) {
  if (x.value().size() != 1) throw std::invalid_argument("scalar_value: not a scalar");
  return x.value()(0);
}

Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace dcnp
