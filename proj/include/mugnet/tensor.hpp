#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mugnet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

namespace detail {

struct TensorImpl;
using BackwardFn = std::function<void(TensorImpl& self)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  // Scratch gradient of the backward pass currently running.
  std::vector<double> pending;
  bool requires_grad = false;
  // Position on the recording tape; parents always carry a smaller value.
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward_fn;

  // Gradient sink of parent i, or nullptr if that parent is not tracked.
  std::vector<double>* parent_grad(std::size_t i) const;
};

}  // namespace detail

// Dense row-major float64 array with optional reverse-mode gradient tracking.
//
// Tensor is a shared handle: copies alias the same storage and history. Every
// op result remembers its inputs, and backward() replays the recorded ops in
// exact reverse creation order.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> data() const;
  // In-place access for leaf updates (optimizer steps, test perturbations).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Accumulates d(this)/d(x) into every tracked ancestor x. `this` must hold
  // exactly one element. The graph is kept, so a second call adds the same
  // gradients again.
  void backward() const;

  // Same values, no history, no gradient tracking.
  Tensor detach() const;

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl& impl() const { return *impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

  static Tensor record(Shape shape, std::vector<double> data,
                       const std::vector<Tensor>& inputs, detail::BackwardFn fn);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- primitive ops ----

Tensor matmul(const Tensor& a, const Tensor& b);

enum class ElementwiseOp { Add, Sub, Mul, Div, Relu, Sigmoid };

// Binary ops broadcast over trailing dimensions (numpy rules). Unary ops
// ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {});

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Div, a, b); }
inline Tensor relu(const Tensor& a) { return elementwise(ElementwiseOp::Relu, a); }
inline Tensor sigmoid(const Tensor& a) { return elementwise(ElementwiseOp::Sigmoid, a); }

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

enum class ReduceOp { Sum, Mean, Max };

// Removes `axis`; a fully reduced tensor has shape {1}. Max sends the gradient
// to the lowest-index maximum.
Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis);

inline Tensor sum(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Sum, a, axis); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Mean, a, axis); }
inline Tensor max(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::Max, a, axis); }
Tensor sum_all(const Tensor& a);

enum class BatchNormMode { Train, Eval };

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormStats fresh(std::size_t features);
};

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

// x: N x F, gamma/beta: F. Train mode normalises with biased batch statistics
// and folds them into `stats`; eval mode uses `stats` as is.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, BatchNormMode mode);

// ---- structural ops used by the graph layers ----

Tensor concat_cols(const std::vector<Tensor>& parts);
// Element `i` of the flattened tensor, as shape {1}.
Tensor index(const Tensor& a, std::size_t i);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[s] = mean of rows r with segment[r] == s; empty segments give 0.
Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segment,
                    std::size_t num_segments);
// Rows come in consecutive groups of `group`; out[k] = column-wise max of group k.
Tensor segment_max(const Tensor& x, std::size_t group);
// Applies mix (p x q) to each consecutive block of q rows of x.
Tensor mix_rows(const Tensor& mix, const Tensor& x);

// sum_i w_i * CE(softmax(logits_i), label_i) / sum_i w_i
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                              std::span<const double> weights);

}  // namespace mugnet
