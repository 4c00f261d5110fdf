#include "cgr/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "cgr/kernels.hpp"

namespace cgr {

namespace detail {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void accumulate_grad(const Tensor& t, const double* g, std::size_t n) {
  if (!t.requires_grad()) return;
  auto slot = t.grad_slot();
  if (slot->g.size() != n) slot->g.assign(n, 0.0);
  kern::active().axpy(slot->g.data(), 1.0, g, static_cast<int>(n));
  slot->live = true;
}

thread_local bool g_grad_enabled = true;

}  // namespace detail

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t;
  const std::size_t n = detail::shape_numel(shape);
  t.shape_ = std::move(shape);
  t.values_ = std::make_shared<std::vector<double>>(n, value);
  t.requires_grad_ = requires_grad;
  if (requires_grad) t.grad_ = std::make_shared<GradSlot>();
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  const std::size_t n = detail::shape_numel(shape);
  if (n != values.size()) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + detail::shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad_ = requires_grad;
  if (requires_grad) t.grad_ = std::make_shared<GradSlot>();
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

int Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

int Tensor::cols() const {
  if (shape_.size() >= 2) return shape_[1];
  return shape_.empty() ? 0 : 1;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + detail::shape_str(shape_));
  }
  return (*values_)[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("gradient not populated");
  return grad_->g;
}

void Tensor::zero_grad() {
  if (!grad_) return;
  grad_->g.assign(size(), 0.0);
  grad_->live = false;
}

bool Tensor::all_finite() const {
  for (double v : *values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool grad_enabled() { return detail::g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) {
  detail::g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

void backward(const Tensor& out) {
  if (out.size() != 1) {
    throw std::invalid_argument("backward requires a single-element tensor, got " +
                                detail::shape_str(out.shape()));
  }
  if (!out.requires_grad()) {
    throw std::invalid_argument("backward on a tensor with no recorded operations");
  }
  // Seed d(out)/d(out) = 1.
  auto seed = out.grad_slot();
  seed->g.assign(1, 1.0);
  seed->live = true;

  Node* root = out.node().get();
  if (root == nullptr) return;  // leaf: only its own gradient exists

  // Post-order DFS yields inputs-before-consumers; replaying it reversed is a
  // valid reverse-topological order because every op output is a fresh tensor.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].node().get();
      if (p != nullptr && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->out_grad && n->out_grad->live && n->backward) n->backward(*n);
  }
}

}  // namespace cgr
