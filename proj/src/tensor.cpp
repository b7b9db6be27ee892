#include "decloss/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>

namespace decloss {

namespace detail {

struct TapeCore {
  std::vector<std::function<void()>> nodes;
  bool consumed = false;
};

void TensorData::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

void TensorData::accumulate(std::span<const double> g) {
  ensure_grad();
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

namespace {

std::shared_ptr<TensorData> make_data(Shape shape, std::vector<double> values,
                                      bool requires_grad = false) {
  const Index n = numel_of(shape);
  if (n != static_cast<Index>(values.size()))
    throw ShapeError("tensor: shape " + shape_str(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return d;
}

// Shared tape of the operands, if any. Mixing tensors from two live tapes in
// one operation is a usage bug, as is reusing a tensor after its tape died.
std::shared_ptr<TapeCore> tape_of(std::initializer_list<const Tensor*> ts) {
  std::shared_ptr<TapeCore> core;
  for (const Tensor* t : ts) {
    if (!t->defined()) continue;
    auto c = t->impl()->tape.lock();
    if (!c) {
      if (t->impl()->requires_grad)
        throw ContractError("operand's tape no longer exists; detach() it or keep the tape alive");
      continue;
    }
    if (core && core != c) throw ContractError("operands were recorded on different tapes");
    core = std::move(c);
  }
  return core;
}

Tensor make_result(const std::shared_ptr<TapeCore>& core, Shape shape,
                   std::vector<double> values) {
  auto d = make_data(std::move(shape), std::move(values), core != nullptr);
  if (core) d->tape = core;
  return Tensor(std::move(d));
}

void record(const std::shared_ptr<TapeCore>& core, std::function<void()> pull) {
  if (core) core->nodes.push_back(std::move(pull));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
}

}  // namespace
}  // namespace detail

using detail::make_result;
using detail::record;
using detail::tape_of;

Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e <= 0) throw ShapeError("tensor: non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  const Index n = numel_of(shape);
  return Tensor(detail::make_data(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  const Index n = numel_of(shape);
  return Tensor(detail::make_data(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(detail::make_data(std::move(shape), std::move(values)));
}

const Shape& Tensor::shape() const {
  if (!d_) throw ContractError("tensor: use of an empty tensor");
  return d_->shape;
}

Index Tensor::numel() const { return static_cast<Index>(values().size()); }

Index Tensor::extent(Index axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<Index>(s.size()))
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::values() const {
  if (!d_) throw ContractError("tensor: use of an empty tensor");
  return d_->values;
}

double Tensor::at(std::initializer_list<Index> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size())
    throw ShapeError("tensor: " + std::to_string(idx.size()) + " indices for rank " +
                     std::to_string(s.size()));
  Index flat = 0;
  std::size_t k = 0;
  for (Index i : idx) {
    if (i < 0 || i >= s[k]) throw ShapeError("tensor: index out of bounds");
    flat = flat * s[k] + i;
    ++k;
  }
  return d_->values[flat];
}

double Tensor::operator[](Index flat) const {
  auto v = values();
  if (flat < 0 || flat >= static_cast<Index>(v.size()))
    throw ShapeError("tensor: flat index out of bounds");
  return v[static_cast<std::size_t>(flat)];
}

double Tensor::value() const {
  if (numel() != 1) throw ContractError("tensor: value() on non-scalar " + shape_str(shape()));
  return d_->values[0];
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

bool Tensor::has_grad() const { return d_ && !d_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor: no gradient present; run backward first");
  return d_->grad;
}

void Tensor::clear_grad() {
  if (d_) d_->grad.clear();
}

void Tensor::add_to_grad(std::span<const double> g) {
  if (!d_) throw ContractError("tensor: use of an empty tensor");
  if (g.size() != d_->values.size())
    throw ShapeError("tensor: gradient size mismatch for " + shape_str(d_->shape));
  d_->accumulate(g);
}

Tensor Tensor::detach() const {
  if (!d_) return Tensor();
  return Tensor(detail::make_data(d_->shape, d_->values));
}

// --- Tape -----------------------------------------------------------------

Tape::Tape() : core_(std::make_shared<detail::TapeCore>()) {}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  auto d = detail::make_data(std::move(shape), std::move(values), true);
  d->tape = core_;
  return Tensor(std::move(d));
}

void Tape::backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward: empty root");
  if (root.numel() != 1)
    throw ContractError("backward: root must be scalar, got " + shape_str(root.shape()));
  if (root.impl()->tape.lock() != core_)
    throw ContractError("backward: root was not recorded on this tape");
  if (core_->consumed)
    throw ContractError("backward: tape already replayed; call reset() before reusing it");
  core_->consumed = true;
  root.impl()->grad.assign(1, 1.0);
  for (auto it = core_->nodes.rbegin(); it != core_->nodes.rend(); ++it) (*it)();
}

void Tape::reset() {
  core_->nodes.clear();
  core_->consumed = false;
}

std::size_t Tape::node_count() const { return core_->nodes.size(); }

Tensor Tape::custom_op(const std::vector<Tensor>& inputs, Shape out_shape,
                       std::vector<double> out_values, CustomVjp vjp) {
  Tensor out = make_result(core_, std::move(out_shape), std::move(out_values));
  record(core_, [od = out.impl(), inputs, vjp = std::move(vjp)] {
    if (od->grad.empty()) return;
    vjp(od->grad, inputs);
  });
  return out;
}

// --- matrix ops -------------------------------------------------------------

namespace {

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

// c[m x n] += a[m x k] * b[k x n]
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    for (Index l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      if (av == 0.0) continue;
      const double* brow = &b[l * n];
      double* crow = &c[i * n];
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a^T[k x m]^T * b[k x n], i.e. a is stored transposed
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   Index m, Index k, Index n) {
  for (Index l = 0; l < k; ++l) {
    const double* arow = &a[l * m];
    const double* brow = &b[l * n];
    for (Index i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = &c[i * n];
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b^T[n x k]^T, i.e. b is stored transposed
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   Index m, Index k, Index n) {
  for (Index i = 0; i < m; ++i) {
    const double* arow = &a[i * k];
    for (Index j = 0; j < n; ++j) {
      const double* brow = &b[j * k];
      double s = 0.0;
      for (Index l = 0; l < k; ++l) s += arow[l] * brow[l];
      c[i * n + j] += s;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const Index m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2)
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  matmul_acc(a.values(), b.values(), out, m, k, n);
  auto core = tape_of({&a, &b});
  Tensor res = make_result(core, {m, n}, std::move(out));
  if (core) {
    record(core, [ad = a.impl(), bd = b.impl(), od = res.impl(), m, k, n] {
      if (od->grad.empty()) return;
      std::span<const double> g = od->grad;
      if (ad->requires_grad) {
        ad->ensure_grad();
        matmul_bt_acc(g, bd->values, ad->grad, m, n, k);  // dA += G * B^T
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        matmul_at_acc(ad->values, g, bd->grad, k, m, n);  // dB += A^T * G
      }
    });
  }
  return res;
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const Index r = a.extent(0), c = a.extent(1);
  std::vector<double> out(static_cast<std::size_t>(r * c));
  std::span<const double> av = a.values();
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  auto core = tape_of({&a});
  Tensor res = make_result(core, {c, r}, std::move(out));
  if (core) {
    record(core, [ad = a.impl(), od = res.impl(), r, c] {
      if (od->grad.empty() || !ad->requires_grad) return;
      ad->ensure_grad();
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) ad->grad[i * c + j] += od->grad[j * r + i];
    });
  }
  return res;
}

// --- elementwise ops --------------------------------------------------------

namespace {

template <typename Fwd, typename Pull>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Pull pull) {
  detail::check_same_shape(name, a, b);
  const std::size_t n = a.values().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a.values()[i], b.values()[i]);
  auto core = tape_of({&a, &b});
  Tensor res = make_result(core, a.shape(), std::move(out));
  if (core) {
    record(core, [ad = a.impl(), bd = b.impl(), od = res.impl(), pull] {
      if (od->grad.empty()) return;
      const bool ga = ad->requires_grad, gb = bd->requires_grad;
      if (!ga && !gb) return;
      if (ga) ad->ensure_grad();
      if (gb) bd->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i)
        pull(od->grad[i], ad->values[i], bd->values[i], od->values[i],
             ga ? &ad->grad[i] : nullptr, gb ? &bd->grad[i] : nullptr);
    });
  }
  return res;
}

template <typename Fwd, typename Pull>
Tensor unary_op(const Tensor& x, Fwd fwd, Pull pull) {
  const std::size_t n = x.values().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x.values()[i]);
  auto core = tape_of({&x});
  Tensor res = make_result(core, x.shape(), std::move(out));
  if (core) {
    record(core, [xd = x.impl(), od = res.impl(), pull] {
      if (od->grad.empty() || !xd->requires_grad) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i)
        xd->grad[i] += pull(od->grad[i], xd->values[i], od->values[i]);
    });
  }
  return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double, double* da, double* db) {
        if (da) *da += g;
        if (db) *db += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double, double* da, double* db) {
        if (da) *da += g;
        if (db) *db -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double, double* da, double* db) {
        if (da) *da += g * y;
        if (db) *db += g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.values())
    if (v == 0.0) throw ValueError("div: divisor contains zero");
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y, double out, double* da, double* db) {
        if (da) *da += g / y;
        if (db) *db -= g * out / y;
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double g, double, double out) { return g * out; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw ValueError("log: operand not strictly positive");
  return unary_op(
      x, [](double v) { return std::log(v); },
      [](double g, double v, double) { return g / v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw ValueError("sqrt: operand negative");
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double g, double, double out) { return 0.5 * g / out; });
}

Tensor abs(const Tensor& x) {
  // subgradient 0 at exact ties
  return unary_op(
      x, [](double v) { return std::abs(v); },
      [](double g, double v, double) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return c * v; }, [c](double g, double, double) { return c * g; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v + c; }, [](double g, double, double) { return g; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary_op(
      x, [floor](double v) { return v < floor ? floor : v; },
      [floor](double g, double v, double) { return v > floor ? g : 0.0; });
}

// --- reductions and layout ----------------------------------------------

Tensor reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto core = tape_of({&x});
  Tensor res = make_result(core, {}, {s});
  if (core) {
    record(core, [xd = x.impl(), od = res.impl()] {
      if (od->grad.empty() || !xd->requires_grad) return;
      xd->ensure_grad();
      const double g = od->grad[0];
      for (double& gv : xd->grad) gv += g;
    });
  }
  return res;
}

Tensor reduce_sum(const Tensor& x, std::span<const Index> axes) {
  const Shape& in = x.shape();
  const Index rank = x.rank();
  std::vector<bool> drop(rank, false);
  for (Index ax : axes) {
    if (ax < 0 || ax >= rank)
      throw ShapeError("reduce_sum: axis " + std::to_string(ax) + " out of range for " +
                       shape_str(in));
    if (drop[ax]) throw ShapeError("reduce_sum: duplicate axis " + std::to_string(ax));
    drop[ax] = true;
  }
  Shape out_shape;
  for (Index d = 0; d < rank; ++d)
    if (!drop[d]) out_shape.push_back(in[d]);
  const Index out_n = numel_of(out_shape);

  // flat input index -> flat output index, reused by the adjoint broadcast
  auto map = std::make_shared<std::vector<Index>>(x.values().size());
  std::vector<Index> idx(rank, 0);
  for (std::size_t flat = 0; flat < x.values().size(); ++flat) {
    Index o = 0;
    for (Index d = 0; d < rank; ++d)
      if (!drop[d]) o = o * in[d] + idx[d];
    (*map)[flat] = o;
    for (Index d = rank - 1; d >= 0; --d) {
      if (++idx[d] < in[d]) break;
      idx[d] = 0;
    }
  }

  std::vector<double> out(static_cast<std::size_t>(out_n), 0.0);
  for (std::size_t flat = 0; flat < x.values().size(); ++flat)
    out[(*map)[flat]] += x.values()[flat];

  auto core = tape_of({&x});
  Tensor res = make_result(core, std::move(out_shape), std::move(out));
  if (core) {
    record(core, [xd = x.impl(), od = res.impl(), map] {
      if (od->grad.empty() || !xd->requires_grad) return;
      xd->ensure_grad();
      for (std::size_t flat = 0; flat < xd->grad.size(); ++flat)
        xd->grad[flat] += od->grad[(*map)[flat]];
    });
  }
  return res;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  auto core = tape_of({&x});
  Tensor res = make_result(core, std::move(shape), {x.values().begin(), x.values().end()});
  if (core) {
    record(core, [xd = x.impl(), od = res.impl()] {
      if (od->grad.empty() || !xd->requires_grad) return;
      xd->accumulate(od->grad);
    });
  }
  return res;
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<Index>> indices,
              Shape out_shape) {
  const Index out_n = numel_of(out_shape);
  if (out_n != static_cast<Index>(indices->size()))
    throw ShapeError("gather: index count " + std::to_string(indices->size()) +
                     " does not match output shape " + shape_str(out_shape));
  const Index in_n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(out_n));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Index src = (*indices)[i];
    if (src < -1 || src >= in_n) throw ShapeError("gather: index out of range");
    out[i] = src < 0 ? 0.0 : x.values()[src];
  }
  auto core = tape_of({&x});
  Tensor res = make_result(core, std::move(out_shape), std::move(out));
  if (core) {
    record(core, [xd = x.impl(), od = res.impl(), indices] {
      if (od->grad.empty() || !xd->requires_grad) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        const Index src = (*indices)[i];
        if (src >= 0) xd->grad[src] += od->grad[i];
      }
    });
  }
  return res;
}

// --- finite differences -----------------------------------------------------

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_check: step must be positive");

  Tape tape;
  Tensor var = tape.variable(x.shape(), {x.values().begin(), x.values().end()});
  Tensor root = f(tape, var);
  if (root.numel() != 1)
    throw ContractError("finite_diff_check: function must return a scalar");
  if (!std::isfinite(root.value()))
    throw ValueError("finite_diff_check: function returned a non-finite value");
  tape.backward(root);
  std::vector<double> analytic(x.numel(), 0.0);
  if (var.has_grad()) analytic.assign(var.grad().begin(), var.grad().end());

  auto eval = [&f](const Tensor& point) {
    Tape scratch;  // constant input records nothing; value only
    const double v = f(scratch, point).value();
    if (!std::isfinite(v))
      throw ValueError("finite_diff_check: function returned a non-finite value");
    return v;
  };

  std::vector<double> base(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> pert = base;
    pert[i] = base[i] + h;
    const double up = eval(Tensor::from(x.shape(), pert));
    pert[i] = base[i] - h;
    const double down = eval(Tensor::from(x.shape(), pert));
    const double numeric = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace decloss
