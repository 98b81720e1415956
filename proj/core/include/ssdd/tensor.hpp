#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssdd/errors.hpp"
#include "ssdd/rng.hpp"

namespace ssdd {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the reverse-mode tape. Interior nodes keep shared ownership of
// their inputs, so the graph stays alive as long as any output handle does;
// the graph is a DAG and backward visits each node exactly once.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  double* grad_data();  // allocates zeros on first use
  void accumulate(const double* g, int64_t n);
};

}  // namespace detail

// Dense n-dimensional tensor of f64 scalars with reverse-mode automatic
// differentiation. Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor identity(int64_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t dim(int i) const;
  int ndim() const;
  int64_t numel() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);  // leaves only

  std::span<const double> data() const;
  // Mutable access to leaf storage (optimizer updates). Calling this on an
  // interior node is a contract violation: values there are derived.
  std::span<double> raw();
  std::span<const double> grad() const;  // empty span if never accumulated
  void zero_grad();

  double item() const;  // scalar tensors only
  double at(std::initializer_list<int64_t> idx) const;

  // Value copy detached from the tape.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise / shape ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor sqrt_elem(const Tensor& a, double eps = 0.0);
Tensor relu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // 2-d
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int64_t begin, int64_t end);
// Value-only row gather (new leaf, no tape); for batching constant data.
Tensor take_rows(const Tensor& a, std::span<const int64_t> indices);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [m,d] -> [d]

// ---- rows/vectors ----
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor sub_rowvec(const Tensor& x, const Tensor& v);
Tensor div_rowvec(const Tensor& x, const Tensor& v);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w);                    // x[m,d] w[d,k]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);   // + bias row
// Solves a x = b for symmetric positive definite a via Cholesky. The forward
// pass factors the symmetric part of a; gradients flow to both operands
// through the adjoint solve.
Tensor solve_linear(const Tensor& a, const Tensor& b);

// ---- losses ----
// Mean over rows of the squared row-difference norm.
Tensor mse(const Tensor& pred, const Tensor& target);
Tensor softmax_xent(const Tensor& logits, const std::vector<int>& labels);

// ---- image ops (NCHW) ----
Tensor conv2d(const Tensor& x, const Tensor& w, int pad);  // stride 1, no bias
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor batchnorm2d_fixed(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         const std::vector<double>& mean, const std::vector<double>& var,
                         double eps = 1e-5);
Tensor avgpool2d(const Tensor& x, int k);  // window k, stride k
// out[s, t] = x[s, map[t]] per sample; map indexes the flattened sample.
Tensor gather_sample_elems(const Tensor& x, Shape out_sample_shape, std::vector<int64_t> map);
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor upsample_bilinear(const Tensor& x, int s);
Tensor downsample_avg(const Tensor& x, int s);

// Runs reverse-mode accumulation from a scalar loss. Repeated calls without
// zero_grad add up, matching gradient-accumulation semantics.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);
void check_finite(const Tensor& t, const char* what);

}  // namespace ssdd
