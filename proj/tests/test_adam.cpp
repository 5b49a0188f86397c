#include <doctest.h>

#include <cmath>

#include "dcnp/adam.hpp"
#include "dcnp/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dcnp;

TEST_CASE("zero gradient on a fresh state leaves the parameter unchanged") {
  Parameter p = make_parameter("p", Tensor({3}, {1.0, -2.0, 0.5}));
  p.grad().fill(0.0);
  AdamState st;
  adam_step(st, {&p});
  CHECK(p.value()[0] == doctest::Approx(1.0));
  CHECK(p.value()[1] == doctest::Approx(-2.0));
  CHECK(p.value()[2] == doctest::Approx(0.5));
  CHECK(st.step_count == 1);
}

TEST_CASE("first-step update magnitude is about the learning rate") {
  Parameter p = make_parameter("p", Tensor::scalar(0.0));
  p.grad()(0) = 3.7;
  AdamState st;
  st.lr = 5e-4;
  adam_step(st, {&p});
  CHECK(std::fabs(p.value()(0) + st.lr) < 1e-7);  // g/(|g|+eps) ~ 1
}

TEST_CASE("ten steps on a scalar quadratic match the independent recurrence") {
  AdamState st;
  st.lr = 0.05;
  Parameter p = make_parameter("p", Tensor::scalar(2.0));
  oracles::AdamScalarRef ref(st.lr, st.beta1, st.beta2, st.eps);
  double xref = 2.0;
  for (int i = 0; i < 10; ++i) {
    // loss = x^2, gradient 2x.
    const double g = 2.0 * p.value()(0);
    p.grad()(0) = g;
    adam_step(st, {&p});
    xref = ref.step(xref, 2.0 * xref);
    CHECK(std::fabs(p.value()(0) - xref) < 1e-12);
  }
  CHECK(st.step_count == 10);
}

TEST_CASE("update is nearly invariant to uniform gradient scaling") {
  Parameter p1 = make_parameter("a", Tensor({4}, {1.0, 2.0, 3.0, 4.0}));
  Parameter p2 = make_parameter("b", Tensor({4}, {1.0, 2.0, 3.0, 4.0}));
  for (int i = 0; i < 4; ++i) {
    p1.grad()[i] = 0.01 * (i + 1);
    p2.grad()[i] = 10.0 * (i + 1);  // x1000
  }
  AdamState s1, s2;
  adam_step(s1, {&p1});
  adam_step(s2, {&p2});
  for (int i = 0; i < 4; ++i) {
    const double u1 = p1.value()[i] - (i + 1.0);
    const double u2 = p2.value()[i] - (i + 1.0);
    CHECK(std::fabs(u1 - u2) / std::fabs(u2) < 1e-6);
  }
}

TEST_CASE("non-finite gradients are rejected") {
  Parameter p = make_parameter("p", Tensor::scalar(1.0));
  p.grad()(0) = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  CHECK_THROWS_AS(adam_step(st, {&p}), numeric_error);
}

TEST_CASE("step count increases by one per update") {
  Parameter p = make_parameter("p", Tensor::scalar(1.0));
  AdamState st;
  for (int i = 1; i <= 5; ++i) {
    p.grad()(0) = 0.1;
    adam_step(st, {&p});
    CHECK(st.step_count == i);
  }
}
