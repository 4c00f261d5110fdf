#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cgr {

struct Node;

// Gradient storage shared by all copies of a tensor. `live` flips to true the
// first time backward() deposits into it; zero_grad() resets it.
struct GradSlot {
  std::vector<double> g;
  bool live = false;
};

// Dense row-major array of 64-bit floats with optional reverse-mode gradient.
// Copies are shallow: they share values, gradient slot and the creator node,
// so a Tensor behaves like a handle into the computation graph. Tensors that
// are not attached to a graph are immutable values safe to share across
// threads; graph construction and backward over one graph are single-threaded.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(values_); }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return values_ ? values_->size() : 0; }
  int rows() const;  // first extent
  int cols() const;  // second extent (1 for rank-1)

  double* data() { return values_->data(); }
  const double* data() const { return values_->data(); }

  double at(int i) const { return (*values_)[static_cast<std::size_t>(i)]; }
  double at(int i, int j) const {
    return (*values_)[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  double item() const;  // value of a single-element tensor

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return grad_ && grad_->live; }
  const std::vector<double>& grad() const;
  double grad_at(int i) const { return grad()[static_cast<std::size_t>(i)]; }
  double grad_at(int i, int j) const {
    return grad()[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  void zero_grad();

  bool all_finite() const;

  // graph internals, used by ops.cpp and the optimizer
  std::shared_ptr<std::vector<double>> values_ptr() const { return values_; }
  std::shared_ptr<GradSlot> grad_slot() const { return grad_; }
  std::shared_ptr<Node> node() const { return node_; }
  void set_node(std::shared_ptr<Node> n) { node_ = std::move(n); }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> values_;
  std::shared_ptr<GradSlot> grad_;
  bool requires_grad_ = false;
  std::shared_ptr<Node> node_;
};

// One recorded operation. Holds handles to the output's buffers (not the
// output tensor itself, which would form a reference cycle) plus the parent
// tensors, which keep the upstream graph alive.
struct Node {
  std::vector<Tensor> parents;
  std::vector<int> out_shape;
  std::shared_ptr<std::vector<double>> out_values;
  std::shared_ptr<GradSlot> out_grad;
  std::function<void(Node&)> backward;
};

// Reverse-mode sweep from a single-element tensor: deposits d(out)/d(t) into
// every requires_grad tensor that contributed to it. Throws on non-scalars.
void backward(const Tensor& out);

// Thread-local recording switch (RAII off-switch for inference and finite
// differences).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {
// Adds g into t's gradient slot (allocating it on first use).
void accumulate_grad(const Tensor& t, const double* g, std::size_t n);
std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);
}  // namespace detail

}  // namespace cgr
