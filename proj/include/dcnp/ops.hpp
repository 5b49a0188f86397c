#pragma once

#include <vector>

#include "dcnp/rng.hpp"
#include "dcnp/tensor.hpp"

namespace dcnp {

enum class Padding { kZero, kCircular };

// Elementwise (same-shape operands).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
// Elementwise quotient with the 0/0 -> 0 convention: output (and gradient)
// are zero wherever the denominator is exactly zero.
Var guarded_div(const Var& num, const Var& den);

Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var neg(const Var& x);

Var relu_op(const Var& x);
Var softplus_op(const Var& x);
Var sigmoid_op(const Var& x);
Var exp_op(const Var& x);
Var log_op(const Var& x);
Var lgamma_op(const Var& x);

// Reductions to a scalar [1].
Var sum(const Var& x);
Var mean(const Var& x);

// dense: rows of `x` [N, Din] mapped through weights [Din, Dout] plus bias
// [Dout].
Var dense(const Var& x, const Var& weights, const Var& bias);

// Same-size 2-D convolution, input [H, W, Cin], kernel [kh, kw, Cin, Cout]
// with odd kh, kw. Zero padding truncates windows at the border; circular
// padding wraps indices.
Var conv2d(const Var& input, const Var& kernel, Padding padding);
// Per-channel spatial convolution, kernel [kh, kw, C].
Var conv2d_depthwise(const Var& input, const Var& kernel, Padding padding);
// One spatial kernel [kh, kw] applied to every channel.
Var conv2d_shared(const Var& input, const Var& kernel, Padding padding);
// Depthwise spatial stage followed by a 1x1 channel-mixing stage,
// point_kernel [1, 1, C, Cout].
Var depthwise_separable_conv(const Var& input, const Var& depth_kernel, const Var& point_kernel,
                             Padding padding);

// out[i,j,c] = x[i,j,c] + b[c]
Var add_channel_bias(const Var& x, const Var& bias);

// Column manipulation on [N, D] matrices.
Var slice_cols(const Var& x, int first, int count);
Var concat_cols(const std::vector<Var>& parts);
// Channel concatenation on [H, W, C] grids.
Var concat_channels(const Var& a, const Var& b);

double scalar_value(const Var& x);

// Glorot-uniform initialization, bound sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out, Rng& rng);

}  // namespace dcnp
