#include "mugnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mugnet/errors.hpp"

namespace mugnet {

namespace {

thread_local int no_grad_depth = 0;
std::atomic<std::uint64_t> next_seq{1};

using detail::TensorImpl;

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void check_matrix(const Tensor& t, const char* op) {
  check_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

// C(m x n) += A(m x k) * B(k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x k) += A(m x n) * B(k x n)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Maps each flat output index to the flat index of an operand broadcast into
// `out`. Operand dims are right-aligned against `out`.
std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& in) {
  const std::size_t n = shape_numel(out);
  const std::size_t offset = out.size() - in.size();
  std::vector<std::size_t> in_stride(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    in_stride[d + offset] = in[d] == 1 ? 0 : stride;
    stride *= in[d];
  }
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t cur = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = cur;
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      cur += in_stride[d];
      if (idx[d] < out[d]) break;
      cur -= in_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

std::vector<double>* detail::TensorImpl::parent_grad(std::size_t i) const {
  TensorImpl& p = *parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.pending;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
  impl_->seq = next_seq.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  check_defined(*this, "data");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  check_defined(*this, "mutable_data");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl_->data[row * impl_->shape[1] + col];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  check_defined(*this, "set_requires_grad");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  check_defined(*this, "grad");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  check_defined(*this, "detach");
  return Tensor(impl_->shape, impl_->data, false);
}

Tensor Tensor::record(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      detail::BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  const bool tracked =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  out.impl_->requires_grad = true;
  out.impl_->parents.reserve(inputs.size());
  for (const auto& t : inputs) out.impl_->parents.push_back(t.impl_);
  out.impl_->backward_fn = std::move(fn);
  return out;
}

void Tensor::backward() const {
  check_defined(*this, "backward");
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& p : node->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->seq > b->seq; });

  for (TensorImpl* node : order) node->pending.assign(node->data.size(), 0.0);
  impl_->pending[0] = 1.0;
  for (TensorImpl* node : order) {
    if (node->backward_fn) node->backward_fn(*node);
  }
  for (TensorImpl* node : order) {
    if (node->grad.empty()) {
      node->grad = std::move(node->pending);
    } else {
      for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += node->pending[i];
    }
    node->pending.clear();
    node->pending.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::record({m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
    const double* g = self.pending.data();
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    if (auto* ga = self.parent_grad(0)) gemm_nt(g, B.data(), ga->data(), m, n, k);
    if (auto* gb = self.parent_grad(1)) gemm_tn(A.data(), g, gb->data(), m, k, n);
  });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  check_defined(a, "elementwise");
  const auto& x = a.data();
  if (op == ElementwiseOp::Relu || op == ElementwiseOp::Sigmoid) {
    std::vector<double> out(x.size());
    if (op == ElementwiseOp::Relu) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      return Tensor::record(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
        auto* ga = self.parent_grad(0);
        const auto& in = self.parents[0]->data;
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (in[i] > 0.0) (*ga)[i] += self.pending[i];
        }
      });
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
    return Tensor::record(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
      auto* ga = self.parent_grad(0);
      for (std::size_t i = 0; i < self.data.size(); ++i) {
        const double s = self.data[i];
        (*ga)[i] += self.pending[i] * s * (1.0 - s);
      }
    });
  }

  check_defined(b, "elementwise");
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  // Identity maps are left empty to skip the index indirection.
  auto make_map = [&](const Tensor& t) {
    return t.shape() == out_shape ? std::vector<std::size_t>{} : broadcast_map(out_shape, t.shape());
  };
  auto ia = std::make_shared<const std::vector<std::size_t>>(make_map(a));
  auto ib = std::make_shared<const std::vector<std::size_t>>(make_map(b));
  const auto& y = b.data();
  std::vector<double> out(n);
  for (std::size_t o = 0; o < n; ++o) {
    const double u = ia->empty() ? x[o] : x[(*ia)[o]];
    const double v = ib->empty() ? y[o] : y[(*ib)[o]];
    switch (op) {
      case ElementwiseOp::Add: out[o] = u + v; break;
      case ElementwiseOp::Sub: out[o] = u - v; break;
      case ElementwiseOp::Mul: out[o] = u * v; break;
      case ElementwiseOp::Div: out[o] = u / v; break;
      default: break;
    }
  }
  return Tensor::record(out_shape, std::move(out), {a, b}, [op, ia, ib](TensorImpl& self) {
    const auto& u = self.parents[0]->data;
    const auto& v = self.parents[1]->data;
    auto* ga = self.parent_grad(0);
    auto* gb = self.parent_grad(1);
    for (std::size_t o = 0; o < self.pending.size(); ++o) {
      const double g = self.pending[o];
      const std::size_t i = ia->empty() ? o : (*ia)[o];
      const std::size_t j = ib->empty() ? o : (*ib)[o];
      switch (op) {
        case ElementwiseOp::Add:
          if (ga) (*ga)[i] += g;
          if (gb) (*gb)[j] += g;
          break;
        case ElementwiseOp::Sub:
          if (ga) (*ga)[i] += g;
          if (gb) (*gb)[j] -= g;
          break;
        case ElementwiseOp::Mul:
          if (ga) (*ga)[i] += g * v[j];
          if (gb) (*gb)[j] += g * u[i];
          break;
        case ElementwiseOp::Div:
          if (ga) (*ga)[i] += g / v[j];
          if (gb) (*gb)[j] -= g * u[i] / (v[j] * v[j]);
          break;
        default: break;
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  check_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::record(a.shape(), std::move(out), {a}, [factor](TensorImpl& self) {
    auto* ga = self.parent_grad(0);
    for (std::size_t i = 0; i < self.pending.size(); ++i) (*ga)[i] += factor * self.pending[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  check_defined(a, "add_scalar");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return Tensor::record(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto* ga = self.parent_grad(0);
    for (std::size_t i = 0; i < self.pending.size(); ++i) (*ga)[i] += self.pending[i];
  });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis) {
  check_defined(a, "reduce");
  if (axis >= a.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
  }
  const Shape& in = a.shape();
  const std::size_t extent = in[axis];
  if (extent == 0) throw DomainError("reduce over an empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in[d];
  for (std::size_t d = axis + 1; d < in.size(); ++d) inner *= in[d];
  Shape out_shape;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (d != axis) out_shape.push_back(in[d]);
  }
  if (out_shape.empty()) out_shape = {1};

  const auto& x = a.data();
  std::vector<double> out(outer * inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (op == ReduceOp::Max) argmax->resize(out.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * extent * inner + i;
      if (op == ReduceOp::Max) {
        std::size_t best = 0;
        for (std::size_t e = 1; e < extent; ++e) {
          if (x[base + e * inner] > x[base + best * inner]) best = e;
        }
        out[o * inner + i] = x[base + best * inner];
        (*argmax)[o * inner + i] = base + best * inner;
      } else {
        double acc = 0.0;
        for (std::size_t e = 0; e < extent; ++e) acc += x[base + e * inner];
        out[o * inner + i] = op == ReduceOp::Mean ? acc / static_cast<double>(extent) : acc;
      }
    }
  }
  return Tensor::record(out_shape, std::move(out), {a},
                        [op, outer, inner, extent, argmax](TensorImpl& self) {
    auto* ga = self.parent_grad(0);
    const double norm = op == ReduceOp::Mean ? 1.0 / static_cast<double>(extent) : 1.0;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double g = self.pending[o * inner + i];
        if (op == ReduceOp::Max) {
          (*ga)[(*argmax)[o * inner + i]] += g;
          continue;
        }
        const std::size_t base = o * extent * inner + i;
        for (std::size_t e = 0; e < extent; ++e) (*ga)[base + e * inner] += g * norm;
      }
    }
  });
}

Tensor sum_all(const Tensor& a) {
  check_defined(a, "sum_all");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::record({1}, {acc}, {a}, [](TensorImpl& self) {
    auto* ga = self.parent_grad(0);
    for (auto& g : *ga) g += self.pending[0];
  });
}

BatchNormStats BatchNormStats::fresh(std::size_t features) {
  return {Tensor::zeros({features}), Tensor::full({features}, 1.0)};
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  BatchNormMode mode) {
  check_matrix(x, "batch_norm");
  const std::size_t n = x.rows(), f = x.cols();
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &stats.running_mean, &stats.running_var}) {
    check_defined(*t, "batch_norm");
    if (t->numel() != f) {
      throw DimensionError("batch_norm: parameter " + shape_str(t->shape()) +
                           " does not match input " + shape_str(x.shape()));
    }
  }
  const auto& xv = x.data();
  std::vector<double> mu(f, 0.0), inv_std(f);
  if (mode == BatchNormMode::Train) {
    std::vector<double> var(f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) mu[j] += xv[i * f + j];
    }
    for (auto& m : mu) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = xv[i * f + j] - mu[j];
        var[j] += d * d;
      }
    }
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    for (std::size_t j = 0; j < f; ++j) {
      const double biased = var[j] / static_cast<double>(n);
      inv_std[j] = 1.0 / std::sqrt(biased + kBatchNormEps);
      rm[j] = (1.0 - kBatchNormMomentum) * rm[j] + kBatchNormMomentum * mu[j];
      if (n > 1) {
        const double unbiased = var[j] / static_cast<double>(n - 1);
        rv[j] = (1.0 - kBatchNormMomentum) * rv[j] + kBatchNormMomentum * unbiased;
      }
    }
  } else {
    const auto rm = stats.running_mean.data();
    const auto rv = stats.running_var.data();
    for (std::size_t j = 0; j < f; ++j) {
      mu[j] = rm[j];
      inv_std[j] = 1.0 / std::sqrt(rv[j] + kBatchNormEps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(n * f);
  std::vector<double> out(n * f);
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (xv[i * f + j] - mu[j]) * inv_std[j];
      (*xhat)[i * f + j] = h;
      out[i * f + j] = gv[j] * h + bv[j];
    }
  }
  const bool train = mode == BatchNormMode::Train;
  return Tensor::record({n, f}, std::move(out), {x, gamma, beta},
                        [n, f, train, xhat, inv_std](TensorImpl& self) {
    const auto& g = self.pending;
    const auto& gam = self.parents[1]->data;
    if (auto* ggamma = self.parent_grad(1)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) (*ggamma)[j] += g[i * f + j] * (*xhat)[i * f + j];
      }
    }
    if (auto* gbeta = self.parent_grad(2)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) (*gbeta)[j] += g[i * f + j];
      }
    }
    auto* gx = self.parent_grad(0);
    if (!gx) return;
    if (!train) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) (*gx)[i * f + j] += g[i * f + j] * gam[j] * inv_std[j];
      }
      return;
    }
    const double nn = static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dh = g[i * f + j] * gam[j];
        sum_dh += dh;
        sum_dh_h += dh * (*xhat)[i * f + j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double dh = g[i * f + j] * gam[j];
        (*gx)[i * f + j] +=
            inv_std[j] / nn * (nn * dh - sum_dh - (*xhat)[i * f + j] * sum_dh_h);
      }
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_matrix(p, "concat_cols");
    if (p.rows() != n) {
      throw DimensionError("concat_cols: row counts differ (" + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()) + ")");
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(src.data() + i * widths[k], widths[k], out.data() + i * total + off);
    }
    off += widths[k];
  }
  return Tensor::record({n, total}, std::move(out), parts, [n, total, widths](TensorImpl& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* gk = self.parent_grad(k)) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) {
            (*gk)[i * widths[k] + j] += self.pending[i * total + off + j];
          }
        }
      }
      off += widths[k];
    }
  });
}

Tensor index(const Tensor& a, std::size_t i) {
  check_defined(a, "index");
  if (i >= a.numel()) {
    throw DimensionError("index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  }
  return Tensor::record({1}, {a.data()[i]}, {a}, [i](TensorImpl& self) {
    (*self.parent_grad(0))[i] += self.pending[0];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  check_matrix(x, "gather_rows");
  const std::size_t f = x.cols(), r = x.rows();
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  std::vector<double> out(idx->size() * f);
  const auto src = x.data();
  for (std::size_t k = 0; k < idx->size(); ++k) {
    if ((*idx)[k] >= r) {
      throw DimensionError("gather_rows: row " + std::to_string((*idx)[k]) + " out of range for " +
                           shape_str(x.shape()));
    }
    std::copy_n(src.data() + (*idx)[k] * f, f, out.data() + k * f);
  }
  return Tensor::record({idx->size(), f}, std::move(out), {x}, [idx, f](TensorImpl& self) {
    auto* gx = self.parent_grad(0);
    for (std::size_t k = 0; k < idx->size(); ++k) {
      double* dst = gx->data() + (*idx)[k] * f;
      const double* g = self.pending.data() + k * f;
      for (std::size_t j = 0; j < f; ++j) dst[j] += g[j];
    }
  });
}

Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segment,
                    std::size_t num_segments) {
  check_matrix(x, "segment_mean");
  const std::size_t e = x.rows(), f = x.cols();
  if (segment.size() != e) {
    throw DimensionError("segment_mean: " + std::to_string(segment.size()) + " segment ids for " +
                         shape_str(x.shape()));
  }
  if (num_segments == 0) throw DimensionError("segment_mean: zero segments");
  auto seg = std::make_shared<std::vector<std::size_t>>(segment.begin(), segment.end());
  auto inv_count = std::make_shared<std::vector<double>>(num_segments, 0.0);
  for (auto s : *seg) {
    if (s >= num_segments) throw DimensionError("segment_mean: segment id out of range");
    (*inv_count)[s] += 1.0;
  }
  for (auto& c : *inv_count) c = c > 0 ? 1.0 / c : 0.0;
  std::vector<double> out(num_segments * f, 0.0);
  const auto src = x.data();
  for (std::size_t r = 0; r < e; ++r) {
    double* dst = out.data() + (*seg)[r] * f;
    for (std::size_t j = 0; j < f; ++j) dst[j] += src[r * f + j];
  }
  for (std::size_t s = 0; s < num_segments; ++s) {
    for (std::size_t j = 0; j < f; ++j) out[s * f + j] *= (*inv_count)[s];
  }
  return Tensor::record({num_segments, f}, std::move(out), {x}, [seg, inv_count, f](TensorImpl& self) {
    auto* gx = self.parent_grad(0);
    for (std::size_t r = 0; r < seg->size(); ++r) {
      const std::size_t s = (*seg)[r];
      const double w = (*inv_count)[s];
      for (std::size_t j = 0; j < f; ++j) (*gx)[r * f + j] += self.pending[s * f + j] * w;
    }
  });
}

Tensor segment_max(const Tensor& x, std::size_t group) {
  check_matrix(x, "segment_max");
  const std::size_t r = x.rows(), f = x.cols();
  if (group == 0) throw DomainError("segment_max: empty group");
  if (r % group != 0) {
    throw DimensionError("segment_max: " + shape_str(x.shape()) + " is not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t k = r / group;
  const auto src = x.data();
  std::vector<double> out(k * f);
  auto arg = std::make_shared<std::vector<std::size_t>>(k * f);
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t j = 0; j < f; ++j) {
      std::size_t best = b * group;
      for (std::size_t i = b * group + 1; i < (b + 1) * group; ++i) {
        if (src[i * f + j] > src[best * f + j]) best = i;
      }
      out[b * f + j] = src[best * f + j];
      (*arg)[b * f + j] = best * f + j;
    }
  }
  return Tensor::record({k, f}, std::move(out), {x}, [arg](TensorImpl& self) {
    auto* gx = self.parent_grad(0);
    for (std::size_t o = 0; o < arg->size(); ++o) (*gx)[(*arg)[o]] += self.pending[o];
  });
}

Tensor mix_rows(const Tensor& mix, const Tensor& x) {
  check_matrix(mix, "mix_rows");
  check_matrix(x, "mix_rows");
  const std::size_t p = mix.rows(), q = mix.cols(), f = x.cols();
  if (x.rows() % q != 0) {
    throw DimensionError("mix_rows: " + shape_str(x.shape()) + " is not a stack of " +
                         std::to_string(q) + "-row blocks for mixer " + shape_str(mix.shape()));
  }
  const std::size_t blocks = x.rows() / q;
  std::vector<double> out(blocks * p * f, 0.0);
  const auto m = mix.data();
  const auto xv = x.data();
  for (std::size_t b = 0; b < blocks; ++b) {
    gemm_nn(m.data(), xv.data() + b * q * f, out.data() + b * p * f, p, q, f);
  }
  return Tensor::record({blocks * p, f}, std::move(out), {mix, x},
                        [p, q, f, blocks](TensorImpl& self) {
    const auto& m = self.parents[0]->data;
    const auto& xv = self.parents[1]->data;
    auto* gm = self.parent_grad(0);
    auto* gx = self.parent_grad(1);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* g = self.pending.data() + b * p * f;
      if (gm) gemm_nt(g, xv.data() + b * q * f, gm->data(), p, f, q);
      if (gx) gemm_tn(m.data(), g, gx->data() + b * q * f, p, q, f);
    }
  });
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                              std::span<const double> weights) {
  check_matrix(logits, "weighted_cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n || weights.size() != n) {
    throw DimensionError("weighted_cross_entropy: " + std::to_string(labels.size()) + " labels and " +
                         std::to_string(weights.size()) + " weights for logits " +
                         shape_str(logits.shape()));
  }
  double total_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(c) + ")");
    }
    if (!(weights[i] >= 0.0)) throw ValidationError("cluster weights must be nonnegative");
    total_w += weights[i];
  }
  if (!(total_w > 0.0)) throw ValidationError("cluster weights sum to zero");

  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double se = 0.0;
    for (std::size_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - lse);
    loss += weights[i] * (lse - row[labels[i]]);
  }
  loss /= total_w;
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto coef = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  for (auto& w : *coef) w /= total_w;
  return Tensor::record({1}, {loss}, {logits}, [n, c, probs, lab, coef](TensorImpl& self) {
    auto* gz = self.parent_grad(0);
    const double g = self.pending[0];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double target = static_cast<int>(j) == (*lab)[i] ? 1.0 : 0.0;
        (*gz)[i * c + j] += g * (*coef)[i] * ((*probs)[i * c + j] - target);
      }
    }
  });
}

}  // namespace mugnet
