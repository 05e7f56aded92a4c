#include "penex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "penex/errors.hpp"
#include "penex/kernels.hpp"

namespace penex {

using detail::TensorImpl;

namespace {

thread_local Graph* g_active = nullptr;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Returns the gradient buffer of t, allocating zeros on first use, or null
// when t does not take gradients.
double* grad_buffer(const std::shared_ptr<TensorImpl>& t) {
  if (!t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
  return t->grad.data();
}

}  // namespace

// Grants the op implementations access to tensor internals.
struct OpRecorder {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }

  static bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (g_active == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->requires_grad(); });
  }

  static Tensor output(Shape shape, std::vector<double> data, bool track) {
    return Tensor(std::move(shape), std::move(data), track);
  }
};

namespace {
const std::shared_ptr<TensorImpl>& impl_of(const Tensor& t) { return OpRecorder::impl(t); }
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> data;
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): not a matrix " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): not a matrix " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item(): tensor is not a scalar " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::operator()(std::size_t i, std::size_t j) const {
  return impl_->data[i * cols() + j];
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

// ---- Graph ------------------------------------------------------------------

Graph::Graph() : previous_(g_active) { g_active = this; }

Graph::~Graph() { g_active = previous_; }

Graph* Graph::active() { return g_active; }

void Graph::record(const Tensor& out, Vjp vjp) {
  nodes_.push_back(Node{impl_of(out), std::move(vjp)});
}

void Graph::backward(const Tensor& root) {
  if (root.numel() != 1)
    throw ContractError("backward(): root must be a scalar, got " + shape_str(root.shape()));
  for (auto& node : nodes_) node.out->grad.clear();
  const auto& r = impl_of(root);
  if (!r->requires_grad) return;
  grad_buffer(r)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->vjp(it->out->grad);
  }
}

NoGrad::NoGrad() : saved_(g_active) { g_active = nullptr; }

NoGrad::~NoGrad() { g_active = saved_; }

void backward(const Tensor& root) {
  Graph* g = Graph::active();
  if (g == nullptr) throw ContractError("backward(): no active graph");
  g->backward(root);
}

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  std::vector<double> out(m * n);
  kernels::gemm_nn(a.data(), b.data(), out, m, k, n);
  const bool track = OpRecorder::tracking({&a, &b});
  Tensor y = OpRecorder::output({m, n}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a), bi = impl_of(b);
    g_active->record(y, [ai, bi, m, k, n](std::span<const double> g) {
      if (double* ga = grad_buffer(ai)) kernels::gemm_nt(g, bi->data, {ga, m * k}, m, n, k, true);
      if (double* gb = grad_buffer(bi)) kernels::gemm_tn(ai->data, g, {gb, k * n}, k, m, n, true);
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t n = x.rows(), in = x.cols(), out_dim = w.rows();
  if (w.cols() != in || bias.numel() != out_dim)
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + ", " +
                         shape_str(w.shape()) + ", " + shape_str(bias.shape()));
  std::vector<double> out(n * out_dim);
  kernels::gemm_nt(x.data(), w.data(), out, n, in, out_dim);
  const auto bd = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += bd[j];
  const bool track = OpRecorder::tracking({&x, &w, &bias});
  Tensor y = OpRecorder::output({n, out_dim}, std::move(out), track);
  if (track) {
    auto xi = impl_of(x), wi = impl_of(w), bi = impl_of(bias);
    g_active->record(y, [xi, wi, bi, n, in, out_dim](std::span<const double> g) {
      if (double* gx = grad_buffer(xi))
        kernels::gemm_nn(g, wi->data, {gx, n * in}, n, out_dim, in, true);
      if (double* gw = grad_buffer(wi))
        kernels::gemm_tn(g, xi->data, {gw, out_dim * in}, out_dim, n, in, true);
      if (double* gb = grad_buffer(bi))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
    });
  }
  return y;
}

namespace {

template <class Fwd, class Vjp>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Vjp vjp) {
  require_same_shape(a, b, name);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  const bool track = OpRecorder::tracking({&a, &b});
  Tensor y = OpRecorder::output(a.shape(), std::move(out), track);
  if (track) {
    auto ai = impl_of(a), bi = impl_of(b);
    g_active->record(y, [ai, bi, vjp](std::span<const double> g) {
      double* ga = grad_buffer(ai);
      double* gb = grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto [da, db] = vjp(ai->data[i], bi->data[i], g[i]);
        if (ga) ga[i] += da;
        if (gb) gb[i] += db;
      }
    });
  }
  return y;
}

// y = fwd(x) elementwise with dy/dx = deriv(x, y).
template <class Fwd, class Deriv>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output(a.shape(), std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    auto yi = impl_of(y).get();  // node owns y; raw pointer avoids a cycle
    g_active->record(y, [ai, yi, deriv](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(ai->data[i], yi->data[i]);
    });
  }
  return y;
}

struct Pair {
  double a, b;
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return Pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return Pair{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return Pair{g * y, g * x}; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row");
  require_rank(row, 1, "add_row");
  const std::size_t n = a.rows(), k = a.cols();
  if (row.numel() != k)
    throw DimensionError("add_row: row of " + shape_str(row.shape()) + " against " +
                         shape_str(a.shape()));
  const auto ad = a.data(), rd = row.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = ad[i * k + j] + rd[j];
  const bool track = OpRecorder::tracking({&a, &row});
  Tensor y = OpRecorder::output({n, k}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a), ri = impl_of(row);
    g_active->record(y, [ai, ri, n, k](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < n * k; ++i) ga[i] += g[i];
      if (double* gr = grad_buffer(ri))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) gr[j] += g[i * k + j];
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must be a scalar");
  const double sv = s.item();
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * ad[i];
  const bool track = OpRecorder::tracking({&a, &s});
  Tensor y = OpRecorder::output(a.shape(), std::move(out), track);
  if (track) {
    auto ai = impl_of(a), si = impl_of(s);
    g_active->record(y, [ai, si](std::span<const double> g) {
      const double sv = si->data[0];
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
      if (double* gs = grad_buffer(si)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * ai->data[i];
        gs[0] += acc;
      }
    });
  }
  return y;
}

Tensor exp(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  return unary_elementwise(
      a, [p](double x) { return p == 0.0 ? 1.0 : std::pow(x, p); },
      [p](double x, double) {
        if (p == 0.0) return 0.0;
        if (x == 0.0) return p == 1.0 ? 1.0 : 0.0;
        return p * std::pow(x, p - 1.0);
      });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({}, {s}, track);
  if (track) {
    auto ai = impl_of(a);
    g_active->record(y, [ai](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor row_sum(const Tensor& a) {
  require_rank(a, 2, "row_sum");
  const std::size_t n = a.rows(), k = a.cols();
  const auto ad = a.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += ad[i * k + j];
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({n}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    g_active->record(y, [ai, n, k](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += g[i];
    });
  }
  return y;
}

Tensor log_sum_exp(const Tensor& a) {
  require_rank(a, 2, "log_sum_exp");
  const std::size_t n = a.rows(), k = a.cols();
  std::vector<double> out(n);
  kernels::row_logsumexp(a.data(), out, n, k);
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({n}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    g_active->record(y, [ai, n, k](std::span<const double> g) {
      double* ga = grad_buffer(ai);
      if (!ga) return;
      std::vector<double> p(n * k);
      kernels::row_softmax(ai->data, p, n, k);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += g[i] * p[i * k + j];
    });
  }
  return y;
}

Tensor softmax(const Tensor& a) {
  require_rank(a, 2, "softmax");
  const std::size_t n = a.rows(), k = a.cols();
  std::vector<double> out(n * k);
  kernels::row_softmax(a.data(), out, n, k);
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({n, k}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    auto yi = impl_of(y).get();
    g_active->record(y, [ai, yi, n, k](std::span<const double> g) {
      double* ga = grad_buffer(ai);
      if (!ga) return;
      const auto& p = yi->data;
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * p[i * k + j];
        for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += p[i * k + j] * (g[i * k + j] - dot);
      }
    });
  }
  return y;
}

Tensor gather_labels(const Tensor& a, std::span<const int> labels) {
  require_rank(a, 2, "gather_labels");
  const std::size_t n = a.rows(), k = a.cols();
  if (labels.size() != n)
    throw DimensionError("gather_labels: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw IndexError("gather_labels: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    idx[i] = i * k + static_cast<std::size_t>(labels[i]);
  }
  const auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[idx[i]];
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({n}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    g_active->record(y, [ai, idx = std::move(idx)](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
    });
  }
  return y;
}

Tensor zero_sum_completion(const Tensor& a) {
  require_rank(a, 2, "zero_sum_completion");
  const std::size_t n = a.rows(), free = a.cols(), k = free + 1;
  const auto ad = a.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < free; ++j) {
      out[i * k + j] = ad[i * free + j];
      s += ad[i * free + j];
    }
    out[i * k + free] = -s;
  }
  const bool track = OpRecorder::tracking({&a});
  Tensor y = OpRecorder::output({n, k}, std::move(out), track);
  if (track) {
    auto ai = impl_of(a);
    g_active->record(y, [ai, n, free, k](std::span<const double> g) {
      if (double* ga = grad_buffer(ai))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < free; ++j)
            ga[i * free + j] += g[i * k + j] - g[i * k + free];
    });
  }
  return y;
}

}  // namespace penex
