#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation and Adam.
// Only what the attention policy needs: rank <= 2, row-major.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnroute/rng.hpp"

namespace attnroute::dc {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl;

// Recorded operation: the inputs it read and how to push the output's grad back.
struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  void accumulate(std::size_t i, double g) {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    grad[i] += g;
  }
  double* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }
  // Uniform in [-scale, scale].
  static Tensor uniform(Shape shape, double scale, Rng& rng, bool requires_grad = true);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  int rows() const;
  int cols() const;

  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }
  double item() const;
  double at(int r, int c) const { return impl_->data[static_cast<std::size_t>(r * cols() + c)]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  // Empty when no gradient has flowed here.
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }
  bool has_node() const { return impl_->node != nullptr; }

  // Detached copy sharing nothing with this tensor.
  Tensor clone(bool requires_grad = false) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

std::string shape_str(const Shape& s);

// Disables tape recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// Elementwise with broadcasting of b: same shape, a row vector over rows, or a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Along the last axis, max-subtracted.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
// Positions where mask is nonzero take `value`; they receive no gradient.
Tensor masked_fill(const Tensor& a, std::span<const char> mask, double value);
// Rows of a 2-D tensor (or elements of a 1-D tensor) at idx.
Tensor index_select(const Tensor& a, std::span<const int> idx);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean over rows -> shape {1, cols}; with a row mask only rows marked true count.
Tensor mean_rows(const Tensor& a, std::span<const char> row_mask = {});
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;
  explicit BatchNormStats(int features = 0) : mean(static_cast<std::size_t>(features), 0.0), var(static_cast<std::size_t>(features), 1.0) {}
};

// Per-feature normalization over rows of x (rows x features) with affine
// gamma/beta. Training mode uses the statistics of the rows marked in
// row_mask (all rows when empty) and, when `running` is given, folds them
// into it. Eval mode reads `running`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats* running, bool training,
                  std::span<const char> row_mask = {});

// ---- differentiation ------------------------------------------------------

// Reverse pass from a one-element tensor; grads accumulate on every leaf that
// requires them. The recorded graph is released afterwards.
void backward(const Tensor& loss);

// Central-difference check of d f / d x at `point`. Returns the maximum over
// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double eps = 1e-4);

// ---- optimization ---------------------------------------------------------

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  // One update from the accumulated grads; grads are cleared afterwards.
  void step();
  void zero_grad();
  long steps() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

// ---- persistence ----------------------------------------------------------

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  NamedTensors tensors;
};

// "DFC1" text header (meta lines, then one "tensor name rank dims... offset" line
// per tensor, then "end"), followed by raw little-endian float64 data.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace attnroute::dc
