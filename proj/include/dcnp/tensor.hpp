#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcnp {

// Raised when a forward value or a gradient turns out non-finite, or when a
// numerical routine cannot proceed (failed factorization, diverging solve).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const { return static_cast<int>(v_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }

  double& operator()(int i) { return v_[static_cast<std::size_t>(i)]; }
  double operator()(int i) const { return v_[static_cast<std::size_t>(i)]; }
  double& operator()(int i, int j) { return v_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  double operator()(int i, int j) const { return v_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  double& operator()(int i, int j, int k) {
    return v_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double operator()(int i, int j, int k) const {
    return v_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double& operator()(int i, int j, int k, int l) {
    return v_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double operator()(int i, int j, int k, int l) const {
    return v_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  void fill(double v);
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

int shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

class Var;

// One node of the recorded forward pass. `backward_fn` distributes the
// node's gradient into its parents' gradient buffers.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor& g);
  void ensure_grad();
};

// Shared handle to a Node. Copying a Var aliases the node.
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }
  static Var constant(double v) { return leaf(Tensor::scalar(v), false); }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& value() const { return n_->value; }
  Tensor& value() { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  Tensor& grad() { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  Node* node() const { return n_.get(); }

  bool same_node(const Var& o) const { return n_ == o.n_; }

 private:
  std::shared_ptr<Node> n_;
  friend Var make_op(Tensor, std::vector<Var>, std::function<void(Node&)>);
};

// Registers a new operation result. Throws numeric_error if `value` contains
// NaN or Inf. The backward function may be empty when no parent needs a
// gradient.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Reverse-mode sweep from a scalar loss. Gradients of every reachable node
// are zeroed first, so each call yields plain (non-accumulated) derivatives.
// A second sweep from the same loss node is an error.
void backward(const Var& loss);

// A named trainable leaf.
struct Parameter {
  std::string name;
  Var var;

  Tensor& value() { return var.value(); }
  const Tensor& value() const { return var.value(); }
  Tensor& grad() { return var.grad(); }
  const Tensor& grad() const { return var.grad(); }
};

Parameter make_parameter(std::string name, Tensor value);

}  // namespace dcnp
