#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mufuru/errors.hpp"
#include "mufuru/rng.hpp"

namespace mufuru {

/// Row-major extents. Rank 0 denotes a scalar.
using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Shared storage behind a Tensor handle. `grad` stays empty until a backward
/// pass touches the tensor; once populated it always matches `value` in size.
struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Value-semantic handle to a node of a recorded computation. Copying a
/// Tensor aliases the underlying buffer; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  /// Every element sampled uniformly from [lo, hi).
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = true);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  int rank() const { return static_cast<int>(data_->shape.size()); }
  std::int64_t size() const {
    return static_cast<std::int64_t>(data_->value.size());
  }

  std::span<double> value() { return data_->value; }
  std::span<const double> value() const { return data_->value; }

  bool has_grad() const { return !data_->grad.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const;

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool rg) { data_->requires_grad = rg; }

  /// Element of a size-1 tensor.
  double item() const;
  double at(std::int64_t flat_index) const;

  /// Deep copy of the values into a fresh leaf (grad not copied).
  Tensor clone() const;
  /// Overwrite values from another tensor of identical size.
  void copy_values_from(const Tensor& src);

  TensorData* node() const { return data_.get(); }
  const std::shared_ptr<TensorData>& handle() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : data_(std::move(d)) {}
  std::shared_ptr<TensorData> data_;
};

/// Element-wise primitive kinds. Binary kinds require identical shapes.
enum class EwKind {
  // unary
  Tanh,
  Sigmoid,
  Neg,
  Abs,
  Exp,
  Log,
  Scale,  // multiply by a constant
  // binary
  Add,
  Sub,
  Mul,
  Max,
  Min,
};

bool ew_is_unary(EwKind kind);

/// Records primitive applications in topological order and replays them in
/// reverse to accumulate gradients. Gradients from multiple uses of a tensor
/// sum. A tape and its tensors are confined to one thread; independent tapes
/// may run on independent threads.
///
/// A tape constructed with `recording = false` computes values only, which is
/// the evaluation path (no entries, no grad work).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- primitives -----------------------------------------------------------

  /// C[m,n] = A[m,k] . B[k,n]. Backward: dA += dC.B^T, dB += A^T.dC.
  Tensor matmul(const Tensor& a, const Tensor& b);

  /// y = x.W^T + b with W[m,k], b[m]; x is [k] or [batch,k]. The bias is
  /// broadcast over the batch axis.
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

  Tensor elementwise(EwKind kind, const Tensor& a);
  Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
  Tensor elementwise_scale(const Tensor& a, double c);

  Tensor tanh(const Tensor& a) { return elementwise(EwKind::Tanh, a); }
  Tensor sigmoid(const Tensor& a) { return elementwise(EwKind::Sigmoid, a); }
  Tensor neg(const Tensor& a) { return elementwise(EwKind::Neg, a); }
  Tensor abs(const Tensor& a) { return elementwise(EwKind::Abs, a); }
  Tensor exp(const Tensor& a) { return elementwise(EwKind::Exp, a); }
  Tensor log(const Tensor& a) { return elementwise(EwKind::Log, a); }
  Tensor scale(const Tensor& a, double c) { return elementwise_scale(a, c); }
  Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise(EwKind::Add, a, b);
  }
  Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise(EwKind::Sub, a, b);
  }
  Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise(EwKind::Mul, a, b);
  }
  Tensor max(const Tensor& a, const Tensor& b) {
    return elementwise(EwKind::Max, a, b);
  }
  Tensor min(const Tensor& a, const Tensor& b) {
    return elementwise(EwKind::Min, a, b);
  }

  /// Concatenation along the feature (last) axis: vectors [p],[q] -> [p+q] or
  /// matrices [B,p],[B,q] -> [B,p+q]. Backward splits the gradient at p.
  Tensor concat(const Tensor& a, const Tensor& b);

  /// Feature-axis slice [lo, hi) of a vector or matrix.
  Tensor slice(const Tensor& a, int lo, int hi);

  /// Per-feature-dimension softmax across a stack of same-shaped tensors,
  /// computed with max subtraction. For each element position d the l outputs
  /// are positive and sum to 1.
  std::vector<Tensor> softmax_stack(const std::vector<Tensor>& logits);

  /// Sum of all elements -> scalar.
  Tensor sum(const Tensor& a);

  /// Same data, new extents (sizes must match). Backward is the inverse view.
  Tensor reshape(const Tensor& a, Shape shape);

  /// Row lookup: out[i,:] = table[ids[i],:]. Backward scatter-adds rows.
  Tensor embed(const Tensor& table, std::span<const int> ids);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Populates
  /// `grad` on every participating tensor whose requires_grad is set.
  void backward(const Tensor& loss);

  // --- extension API for fused primitives defined in other modules ----------

  Tensor alloc(Shape shape, bool requires_grad);
  /// Register a grad-requiring tensor whose buffer must be zeroed before
  /// replay. No-op for tensors that do not require grad.
  void touch(const Tensor& t);
  /// Append a backward rule. Operands it reads must have been touch()ed.
  void record(std::function<void()> backward_rule);

  bool recording() const { return recording_; }
  std::size_t entry_count() const { return entries_.size(); }

 private:
  bool recording_ = true;
  std::vector<std::function<void()>> entries_;
  std::vector<std::shared_ptr<TensorData>> touched_;
};

/// Stable sigmoid, shared by the forward kernels.
double stable_sigmoid(double x);

}  // namespace mufuru
