#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// A Graph installs itself as the thread's active tape for its lifetime.
// Operations on tensors record a node on the active tape whenever one of
// their operands requires a gradient; without an active tape (or inside a
// NoGrad scope) they only compute values. The tape is append-only, so
// insertion order is a topological order and backward() is a single reverse
// sweep.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace penex {

using Shape = std::vector<std::size_t>;
using Labels = std::vector<int>;

std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means "no gradient yet"
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  /// Scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access; bypasses the tape (used by optimizers).
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator()(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span when none has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Independent copy of the values that does not require a gradient.
  Tensor detach() const;
  /// Deep copy preserving requires_grad, dropping any gradient.
  Tensor clone() const;

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Graph;
  friend struct OpRecorder;
};

/// Append-only tape. Constructing one makes it the active tape on the
/// current thread until it is destroyed.
class Graph {
 public:
  using Vjp = std::function<void(std::span<const double> grad_out)>;

  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active();

  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(root)/d(t) into every requires_grad tensor reachable from
  /// root. Leaf gradients accumulate across calls; intermediate gradients are
  /// recomputed on each call.
  void backward(const Tensor& root);

  void record(const Tensor& out, Vjp vjp);

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> out;
    Vjp vjp;
  };
  std::vector<Node> nodes_;
  Graph* previous_;
  friend class NoGrad;
};

/// Suspends recording on the current thread for its lifetime.
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Graph* saved_;
};

/// Backward on the active tape; throws ContractError when there is none.
void backward(const Tensor& root);

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n x in] * w[out x in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[n x k] + row[k], broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Scalar tensor times any tensor; both operands differentiable.
Tensor scale_by(const Tensor& a, const Tensor& s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
/// Elementwise a^p for a >= 0.
Tensor pow_scalar(const Tensor& a, double p);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [n x K] -> [n]
Tensor row_sum(const Tensor& a);
/// [n x K] -> [n], max-shifted.
Tensor log_sum_exp(const Tensor& a);
/// Row-wise softmax computed through log_sum_exp.
Tensor softmax(const Tensor& a);

/// out[i] = a[i, labels[i]]
Tensor gather_labels(const Tensor& a, std::span<const int> labels);
/// [n x (K-1)] -> [n x K] with last column = -(sum of the others).
Tensor zero_sum_completion(const Tensor& a);

}  // namespace penex
