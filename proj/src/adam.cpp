#include "dcnp/adam.hpp"

#include <cmath>

namespace dcnp {

void adam_step(AdamState& state, const std::vector<Parameter*>& params) {
  if (state.first_moment.empty()) {
    for (Parameter* p : params) {
      state.first_moment.emplace_back(p->value().shape());
      state.second_moment.emplace_back(p->value().shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter list changed size");
  }
  state.step_count += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    Tensor& m = state.first_moment[pi];
    Tensor& v = state.second_moment[pi];
    if (!m.same_shape(p->value())) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + p->name);
    }
    const Tensor& g = p->grad();
    if (!g.same_shape(p->value())) {
      throw std::invalid_argument("adam_step: gradient missing for " + p->name);
    }
    Tensor& x = p->value();
    for (int i = 0; i < x.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi)) throw numeric_error("adam_step: non-finite gradient in " + p->name);
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace dcnp
