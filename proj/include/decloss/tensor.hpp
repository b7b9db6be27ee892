#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "decloss/error.hpp"

namespace decloss {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TapeCore;

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until the backward pass touches it
  bool requires_grad = false;
  std::weak_ptr<TapeCore> tape;

  void accumulate(std::span<const double> g);
  void ensure_grad();
};
}  // namespace detail

// Dense row-major array of doubles. Copies are shallow handles to shared
// storage; values are immutable after construction, only grad mutates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index numel() const;
  Index extent(Index axis) const;

  std::span<const double> values() const;
  double at(std::initializer_list<Index> idx) const;
  double operator[](Index flat) const;
  double value() const;  // scalar convenience; throws unless numel() == 1

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  // Accumulates into the grad buffer. Extension point for custom adjoints;
  // not meant for general use.
  void add_to_grad(std::span<const double> g);

  // Value-only copy with no tape attachment.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorData>& impl() const { return d_; }
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}

 private:
  std::shared_ptr<detail::TensorData> d_;
};

// Records one forward pass. Backward replays the recorded nodes in reverse
// order exactly once; reset() clears the recording for reuse. Confine a tape
// and the evaluation it records to a single thread.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf with requires_grad set; gradients land here after backward().
  Tensor variable(Shape shape, std::vector<double> values);

  void backward(const Tensor& root);
  void reset();
  std::size_t node_count() const;

  // Generic recorded operation: the caller supplies forward values and a
  // vector-Jacobian product that accumulates into the inputs' grads.
  using CustomVjp =
      std::function<void(std::span<const double> out_grad, const std::vector<Tensor>& inputs)>;
  Tensor custom_op(const std::vector<Tensor>& inputs, Shape out_shape,
                   std::vector<double> out_values, CustomVjp vjp);

  const std::shared_ptr<detail::TapeCore>& core() const { return core_; }

 private:
  std::shared_ptr<detail::TapeCore> core_;
};

// --- recorded operations -------------------------------------------------
// Each returns a fresh tensor; when an operand is attached to a tape the
// result is attached too and the exact adjoint is recorded.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor clamp_min(const Tensor& x, double floor);

Tensor reduce_sum(const Tensor& x);                              // all axes -> scalar
Tensor reduce_sum(const Tensor& x, std::span<const Index> axes); // drops the listed axes

Tensor reshape(const Tensor& x, Shape shape);

// out[i] = x[indices[i]], with -1 reading as 0.0 (zero padding). The adjoint
// scatter-adds, so repeated indices broadcast on the way forward and sum on
// the way back.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<Index>> indices,
              Shape out_shape);

// --- verification harness ------------------------------------------------

// Scalar-valued function of one tensor, built from recorded operations.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |central| + 1e-12).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-4);

}  // namespace decloss
