#include "ssdd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"
#include "op_builder.hpp"

namespace ssdd {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

double* Node::grad_data() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

void Node::accumulate(const double* g, int64_t n) {
  double* dst = grad_data();
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

using opb::make_op;

void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::wrap(std::shared_ptr<Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap(new_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                       requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap(
      new_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " scalars");
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError("from_data: non-finite input scalar");
  return wrap(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  const auto n = shape_numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = stddev * rng.normal();
  return wrap(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::identity(int64_t n) {
  std::vector<double> data(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i * n + i)] = 1.0;
  return wrap(new_leaf({n, n}, std::move(data), false));
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::numel() const { return node_->numel(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  require(node_->inputs.empty(), "set_requires_grad: not a leaf");
  node_->requires_grad = v;
}

std::span<const double> Tensor::data() const { return {node_->value}; }

std::span<double> Tensor::raw() {
  require(node_->inputs.empty(), "raw: interior node values are derived");
  return {node_->value};
}

std::span<const double> Tensor::grad() const {
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

double Tensor::item() const {
  require(numel() == 1, "item: tensor is not scalar");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  require(static_cast<int>(idx.size()) == ndim(), "at: wrong index arity");
  int64_t flat = 0;
  int i = 0;
  for (int64_t v : idx) flat = flat * dim(i++) + v;
  return node_->value[static_cast<size_t>(flat)];
}

Tensor Tensor::detach(bool requires_grad) const {
  return wrap(new_leaf(node_->shape, node_->value, requires_grad));
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) throw NumericError(std::string(what) + ": non-finite values");
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_op(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    const int64_t n = self.numel();
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad.data(), n);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_op(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    const int64_t n = self.numel();
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.data(), n);
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < n; ++i) dst[i] -= self.grad[static_cast<size_t>(i)];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_op(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const int64_t n = self.numel();
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      double* dst = self.inputs[0]->grad_data();
      for (int64_t i = 0; i < n; ++i) dst[i] += self.grad[static_cast<size_t>(i)] * bv[static_cast<size_t>(i)];
    }
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < n; ++i) dst[i] += self.grad[static_cast<size_t>(i)] * av[static_cast<size_t>(i)];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_op(a.shape(), std::move(out), "scale", {a}, [s](Node& self) {
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += s * self.grad[static_cast<size_t>(i)];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return make_op(a.shape(), std::move(out), "add_scalar", {a}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.data(), self.numel());
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= v;
  return make_op(a.shape(), std::move(out), "square", {a}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.numel();
    for (int64_t i = 0; i < n; ++i)
      dst[i] += 2.0 * av[static_cast<size_t>(i)] * self.grad[static_cast<size_t>(i)];
  });
}

Tensor sqrt_elem(const Tensor& a, double eps) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::sqrt(v + eps);
  auto saved = out;
  return make_op(a.shape(), std::move(out), "sqrt", {a}, [saved = std::move(saved)](Node& self) {
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.numel();
    for (int64_t i = 0; i < n; ++i)
      dst[i] += 0.5 / saved[static_cast<size_t>(i)] * self.grad[static_cast<size_t>(i)];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_op(a.shape(), std::move(out), "relu", {a}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.numel();
    for (int64_t i = 0; i < n; ++i)
      if (av[static_cast<size_t>(i)] > 0.0) dst[i] += self.grad[static_cast<size_t>(i)];
  });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op(std::move(shape), std::move(out), "reshape", {a}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.data(), self.numel());
  });
}

Tensor transpose(const Tensor& a) {
  require(a.ndim() == 2, "transpose: expects a matrix");
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = ad[static_cast<size_t>(i * n + j)];
  return make_op({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
    double* dst = self.inputs[0]->grad_data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        dst[i * n + j] += self.grad[static_cast<size_t>(j * m + i)];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty input list");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  const int64_t row_elems = shape_numel(tail);
  int64_t rows = 0;
  for (const auto& p : parts) {
    Shape ptail(p.shape().begin() + 1, p.shape().end());
    if (ptail != tail)
      throw ShapeError("concat_rows: trailing dims differ: " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * row_elems));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = {rows};
  shape.insert(shape.end(), tail.begin(), tail.end());

  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(out);
  n->op = "concat_rows";
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& p : parts) n->inputs.push_back(p.node());
    n->backward = [](Node& self) {
      int64_t off = 0;
      for (auto& in : self.inputs) {
        const int64_t cnt = in->numel();
        if (in->requires_grad) in->accumulate(self.grad.data() + off, cnt);
        off += cnt;
      }
    };
  }
  return Tensor::wrap(std::move(n));
}

Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end) {
  require(a.ndim() >= 1 && begin >= 0 && end <= a.dim(0) && begin < end,
          "slice_rows: bad range");
  Shape shape = a.shape();
  shape[0] = end - begin;
  const int64_t row_elems = a.numel() / a.dim(0);
  const auto ad = a.data();
  std::vector<double> out(ad.begin() + begin * row_elems, ad.begin() + end * row_elems);
  return make_op(std::move(shape), std::move(out), "slice_rows", {a},
                 [begin, row_elems](Node& self) {
                   double* dst = self.inputs[0]->grad_data();
                   const int64_t n = self.numel();
                   for (int64_t i = 0; i < n; ++i)
                     dst[begin * row_elems + i] += self.grad[static_cast<size_t>(i)];
                 });
}

Tensor take_rows(const Tensor& a, std::span<const int64_t> indices) {
  require(a.ndim() >= 1, "take_rows: needs a row dimension");
  const int64_t rows = a.dim(0);
  const int64_t row_elems = a.numel() / rows;
  Shape shape = a.shape();
  shape[0] = static_cast<int64_t>(indices.size());
  std::vector<double> out;
  out.reserve(indices.size() * static_cast<size_t>(row_elems));
  const auto ad = a.data();
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= rows) throw ContractError("take_rows: index out of range");
    out.insert(out.end(), ad.begin() + idx * row_elems, ad.begin() + (idx + 1) * row_elems);
  }
  return Tensor::wrap(new_leaf(std::move(shape), std::move(out), false));
}

// ---------------------------------------------------------------------------
// reductions and row/vector forms
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_op({}, {acc}, "sum", {a}, [](Node& self) {
    const double g = self.grad[0];
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.inputs[0]->numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += g;
  });
}

Tensor mean_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make_op({}, {acc * inv}, "mean", {a}, [inv](Node& self) {
    const double g = self.grad[0] * inv;
    double* dst = self.inputs[0]->grad_data();
    const int64_t n = self.inputs[0]->numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += g;
  });
}

Tensor mean_rows(const Tensor& a) {
  require(a.ndim() == 2, "mean_rows: expects a matrix");
  const int64_t m = a.dim(0), d = a.dim(1);
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  const auto ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(j)] += ad[static_cast<size_t>(i * d + j)];
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& v : out) v *= inv;
  return make_op({d}, std::move(out), "mean_rows", {a}, [m, d, inv](Node& self) {
    double* dst = self.inputs[0]->grad_data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < d; ++j) dst[i * d + j] += inv * self.grad[static_cast<size_t>(j)];
  });
}

namespace {

void require_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  if (x.ndim() != 2 || v.ndim() != 1 || x.dim(1) != v.dim(0))
    throw ShapeError(std::string(op) + ": " + shape_str(x.shape()) + " with row vector " +
                     shape_str(v.shape()));
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_rowvec(x, v, "add_rowvec");
  const int64_t m = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto vd = v.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] += vd[static_cast<size_t>(j)];
  return make_op(x.shape(), std::move(out), "add_rowvec", {x, v}, [m, d](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.data(), m * d);
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j) dst[j] += self.grad[static_cast<size_t>(i * d + j)];
    }
  });
}

Tensor sub_rowvec(const Tensor& x, const Tensor& v) {
  require_rowvec(x, v, "sub_rowvec");
  const int64_t m = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto vd = v.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] -= vd[static_cast<size_t>(j)];
  return make_op(x.shape(), std::move(out), "sub_rowvec", {x, v}, [m, d](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.data(), m * d);
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j) dst[j] -= self.grad[static_cast<size_t>(i * d + j)];
    }
  });
}

Tensor div_rowvec(const Tensor& x, const Tensor& v) {
  require_rowvec(x, v, "div_rowvec");
  const int64_t m = x.dim(0), d = x.dim(1);
  const auto vd = v.data();
  for (double w : vd)
    if (w == 0.0) throw NumericError("div_rowvec: zero divisor");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] /= vd[static_cast<size_t>(j)];
  return make_op(x.shape(), std::move(out), "div_rowvec", {x, v}, [m, d](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      double* dst = self.inputs[0]->grad_data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j)
          dst[i * d + j] += self.grad[static_cast<size_t>(i * d + j)] / vv[static_cast<size_t>(j)];
    }
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j) {
          const double vj = vv[static_cast<size_t>(j)];
          dst[j] -= self.grad[static_cast<size_t>(i * d + j)] *
                    xv[static_cast<size_t>(i * d + j)] / (vj * vj);
        }
    }
  });
}

// ---------------------------------------------------------------------------
// matmul / solve
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  kern::mm_nn_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad)  // dA += g * B^T
      kern::mm_nt_acc(self.grad.data(), bv.data(), self.inputs[0]->grad_data(), m, n, k);
    if (self.inputs[1]->requires_grad)  // dB += A^T * g
      kern::mm_tn_acc(av.data(), self.grad.data(), self.inputs[1]->grad_data(), k, m, n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, w); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

Tensor solve_linear(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || a.dim(0) != a.dim(1))
    throw ShapeError("solve_linear: a must be square, got " + shape_str(a.shape()));
  if (b.ndim() != 2 || b.dim(0) != a.dim(0))
    throw ShapeError("solve_linear: a " + shape_str(a.shape()) + " incompatible with b " +
                     shape_str(b.shape()));
  check_finite(a, "solve_linear: a");
  check_finite(b, "solve_linear: b");
  const int64_t n = a.dim(0), m = b.dim(1);

  // Factor the symmetric part; callers pass K + lambda*I which is symmetric
  // up to roundoff, and symmetrizing keeps the adjoint consistent with
  // perturbations of individual entries.
  auto factor = std::make_shared<std::vector<double>>(static_cast<size_t>(n * n));
  const auto ad = a.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      (*factor)[static_cast<size_t>(i * n + j)] =
          0.5 * (ad[static_cast<size_t>(i * n + j)] + ad[static_cast<size_t>(j * n + i)]);
  if (!kern::cholesky_lower(*factor, n))
    throw NumericError("solve_linear: matrix a " + shape_str(a.shape()) +
                       " is not positive definite (Cholesky failed)");

  std::vector<double> x(b.data().begin(), b.data().end());
  kern::cholesky_solve(*factor, n, x.data(), m);

  return make_op({n, m}, std::move(x), "solve_linear", {a, b},
                 [factor, n, m](Node& self) {
                   // gb = A^{-1} g  (A symmetric), gA = -(gb x^T + x gb^T)/2
                   std::vector<double> gb(self.grad.begin(), self.grad.end());
                   kern::cholesky_solve(*factor, n, gb.data(), m);
                   if (self.inputs[1]->requires_grad)
                     self.inputs[1]->accumulate(gb.data(), n * m);
                   if (self.inputs[0]->requires_grad) {
                     double* dst = self.inputs[0]->grad_data();
                     const double* xs = self.value.data();
                     for (int64_t i = 0; i < n; ++i)
                       for (int64_t j = 0; j < n; ++j) {
                         double acc = 0.0;
                         for (int64_t c = 0; c < m; ++c)
                           acc += gb[static_cast<size_t>(i * m + c)] * xs[j * m + c] +
                                  xs[i * m + c] * gb[static_cast<size_t>(j * m + c)];
                         dst[i * n + j] -= 0.5 * acc;
                       }
                   }
                 });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  require(pred.ndim() >= 1, "mse: needs at least one dimension");
  const int64_t rows = pred.dim(0);
  const auto pd = pred.data();
  const auto td = target.data();
  double acc = 0.0;
  for (size_t i = 0; i < pd.size(); ++i) {
    const double d = pd[i] - td[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return make_op({}, {acc * inv}, "mse", {pred, target}, [inv](Node& self) {
    const double g = 2.0 * inv * self.grad[0];
    const auto& pv = self.inputs[0]->value;
    const auto& tv = self.inputs[1]->value;
    const int64_t n = self.inputs[0]->numel();
    if (self.inputs[0]->requires_grad) {
      double* dst = self.inputs[0]->grad_data();
      for (int64_t i = 0; i < n; ++i)
        dst[i] += g * (pv[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)]);
    }
    if (self.inputs[1]->requires_grad) {
      double* dst = self.inputs[1]->grad_data();
      for (int64_t i = 0; i < n; ++i)
        dst[i] -= g * (pv[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)]);
    }
  });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, "backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order over the subgraph that requires grad.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      Node* in = f.node->inputs[f.next_input++].get();
      if (in->requires_grad && !seen.count(in)) {
        seen.insert(in);
        stack.push_back({in, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this pass; only leaves accumulate across
  // repeated backward calls.
  for (Node* n : order)
    if (!n->inputs.empty() && !n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);

  Node* root = loss.node().get();
  root->grad_data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace ssdd
