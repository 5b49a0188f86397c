#include "dcnp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dcnp {

int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("tensor extent must be non-negative");
    n *= e;
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), v_(static_cast<std::size_t>(shape_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), v_(std::move(values)) {
  if (static_cast<int>(v_.size()) != shape_size(shape_)) {
    throw std::invalid_argument("tensor value count does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

void Tensor::fill(double v) { std::fill(v_.begin(), v_.end(), v); }

bool Tensor::all_finite() const {
  for (double x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Node::ensure_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape());
}

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  ensure_grad();
  const double* src = g.data();
  double* dst = grad.data();
  const int n = grad.size();
  for (int i = 0; i < n; ++i) dst[i] += src[i];
}

Var Var::leaf(Tensor value, bool requires_grad) {
  Var v;
  v.n_ = std::make_shared<Node>();
  v.n_->value = std::move(value);
  v.n_->requires_grad = requires_grad;
  if (requires_grad) v.n_->ensure_grad();
  return v;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  if (!value.all_finite()) {
    throw numeric_error("non-finite value produced by forward operation");
  }
  bool needs_grad = false;
  for (const Var& p : parents) needs_grad = needs_grad || p.requires_grad();
  Var out;
  out.n_ = std::make_shared<Node>();
  out.n_->value = std::move(value);
  out.n_->requires_grad = needs_grad;
  out.n_->parents = std::move(parents);
  if (needs_grad) out.n_->backward_fn = std::move(backward_fn);
  return out;
}

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  // Iterative DFS; graphs from deep models overflow the call stack otherwise.
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({n, 0});
  seen.insert(n);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].node();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.value().shape()));
  }
  Node* root = loss.node();
  if (root->consumed) throw std::logic_error("backward: graph already consumed");
  root->consumed = true;
  if (!root->requires_grad) return;

  std::unordered_set<Node*> seen;
  std::vector<Node*> order;  // parents before children
  topo_visit(root, seen, order);

  for (Node* n : order) {
    n->ensure_grad();
    n->grad.fill(0.0);
  }
  root->grad(0) = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
    if (!n->grad.all_finite()) throw numeric_error("non-finite gradient during backward");
  }
}

Parameter make_parameter(std::string name, Tensor value) {
  Parameter p;
  p.name = std::move(name);
  p.var = Var::leaf(std::move(value), true);
  return p;
}

}  // namespace dcnp
