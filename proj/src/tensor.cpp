#include "attnroute/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace attnroute::dc {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

using Impl = TensorImpl;

// Builds the output tensor and, when any input is tracked, its tape node.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs, const char* op,
                   std::function<void(Impl&)> backward_fn) {
  auto out = std::make_shared<Impl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  if (g_grad_enabled) {
    bool track = false;
    for (const Tensor* t : inputs) track = track || t->requires_grad();
    if (track) {
      out->requires_grad = true;
      auto node = std::make_shared<TapeNode>();
      node->op = op;
      for (const Tensor* t : inputs) node->inputs.push_back(t->ptr());
      node->backward = std::move(backward_fn);
      out->node = std::move(node);
    }
  }
  return Tensor(out);
}

Tensor make_result_n(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs, const char* op,
                     std::function<void(Impl&)> backward_fn) {
  auto out = std::make_shared<Impl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  if (g_grad_enabled) {
    bool track = false;
    for (const auto& t : inputs) track = track || t.requires_grad();
    if (track) {
      out->requires_grad = true;
      auto node = std::make_shared<TapeNode>();
      node->op = op;
      for (const auto& t : inputs) node->inputs.push_back(t.ptr());
      node->backward = std::move(backward_fn);
      out->node = std::move(node);
    }
  }
  return Tensor(out);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == 1) return Broadcast::Scalar;
  if (a.rank() == 2 && static_cast<int>(b.numel()) == a.cols() && (b.rank() == 1 || (b.rank() == 2 && b.rows() == 1)))
    return Broadcast::Row;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
}

std::size_t bindex(Broadcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size())
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + shape_str(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::uniform(Shape shape, double scale, Rng& rng, bool requires_grad) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = (2.0 * rng.uniform01() - 1.0) * scale;
  return from(std::move(shape), std::move(v), requires_grad);
}

int Tensor::rows() const {
  if (rank() == 2) return impl_->shape[0];
  return 1;
}

int Tensor::cols() const {
  if (rank() == 0) return 1;
  return impl_->shape.back();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a single value");
  return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), values(), requires_grad); }

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<std::ptrdiff_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Impl* ai = a.impl();
  Impl* bi = b.impl();
  return make_result({m, n}, std::move(out), {&a, &b}, "matmul", [ai, bi, m, k, n](Impl& o) {
    const double* G = o.grad.data();
    if (ai->requires_grad) {
      double* gA = ai->grad_buffer();
      const double* B = bi->data.data();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = G + static_cast<std::ptrdiff_t>(i) * n;
          const double* brow = B + static_cast<std::ptrdiff_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gA[i * k + p] += acc;
        }
    }
    if (bi->requires_grad) {
      double* gB = bi->grad_buffer();
      const double* A = ai->data.data();
      for (int i = 0; i < m; ++i) {
        const double* grow = G + static_cast<std::ptrdiff_t>(i) * n;
        for (int p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gB + static_cast<std::ptrdiff_t>(p) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  const auto& A = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j * m + i)] = A[static_cast<std::size_t>(i * n + j)];
  Impl* ai = a.impl();
  return make_result({n, m}, std::move(out), {&a}, "transpose", [ai, m, n](Impl& o) {
    double* g = ai->grad_buffer();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[i * n + j] += o.grad[static_cast<std::size_t>(j * m + i)];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Impl* ai = a.impl();
  return make_result(std::move(shape), a.values(), {&a}, "reshape", [ai](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

namespace {

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da, DB db) {
  const Broadcast kind = broadcast_kind(a, b, op);
  const std::size_t cols = static_cast<std::size_t>(a.cols());
  std::vector<double> out(a.numel());
  const auto& A = a.values();
  const auto& B = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i], B[bindex(kind, i, cols)]);
  Impl* ai = a.impl();
  Impl* bi = b.impl();
  return make_result(a.shape(), std::move(out), {&a, &b}, op, [ai, bi, kind, cols, da, db](Impl& o) {
    const auto& A = ai->data;
    const auto& B = bi->data;
    if (ai->requires_grad) {
      double* g = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * da(A[i], B[bindex(kind, i, cols)]);
    }
    if (bi->requires_grad) {
      double* g = bi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const std::size_t j = bindex(kind, i, cols);
        g[j] += o.grad[i] * db(A[i], B[j]);
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto& A = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(A[i]);
  Impl* ai = a.impl();
  return make_result(a.shape(), std::move(out), {&a}, op, [ai, deriv](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * deriv(ai->data[i], o.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softmax(const Tensor& a) {
  const std::size_t n = static_cast<std::size_t>(a.cols());
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  std::vector<double> out(a.numel());
  const auto& A = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = A.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= s;
  }
  Impl* ai = a.impl();
  return make_result(a.shape(), std::move(out), {&a}, "softmax", [ai, n, rows](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.data.data() + r * n;
      const double* gy = o.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t n = static_cast<std::size_t>(a.cols());
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  std::vector<double> out(a.numel());
  const auto& A = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = A.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  Impl* ai = a.impl();
  return make_result(a.shape(), std::move(out), {&a}, "log_softmax", [ai, n, rows](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.data.data() + r * n;
      const double* gy = o.grad.data() + r * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += gy[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor masked_fill(const Tensor& a, std::span<const char> mask, double value) {
  if (mask.size() != a.numel())
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " for " + shape_str(a.shape()));
  std::vector<double> out = a.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  std::vector<char> keep(mask.begin(), mask.end());
  Impl* ai = a.impl();
  return make_result(a.shape(), std::move(out), {&a}, "masked_fill", [ai, keep = std::move(keep)](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (!keep[i]) g[i] += o.grad[i];
  });
}

Tensor index_select(const Tensor& a, std::span<const int> idx) {
  const bool rows_mode = a.rank() == 2;
  const int width = rows_mode ? a.cols() : 1;
  const int count = rows_mode ? a.rows() : static_cast<int>(a.numel());
  std::vector<int> index(idx.begin(), idx.end());
  std::vector<double> out;
  out.reserve(index.size() * static_cast<std::size_t>(width));
  for (int r : index) {
    if (r < 0 || r >= count)
      throw ShapeError("index_select: index " + std::to_string(r) + " out of range for " + shape_str(a.shape()));
    for (int c = 0; c < width; ++c) out.push_back(a.values()[static_cast<std::size_t>(r * width + c)]);
  }
  Shape shape = rows_mode ? Shape{static_cast<int>(index.size()), width} : Shape{static_cast<int>(index.size())};
  Impl* ai = a.impl();
  return make_result(std::move(shape), std::move(out), {&a}, "index_select", [ai, index, width](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t k = 0; k < index.size(); ++k)
      for (int c = 0; c < width; ++c)
        g[index[k] * width + c] += o.grad[k * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)];
  });
}

Tensor sum(const Tensor& a) {
  const double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  Impl* ai = a.impl();
  return make_result({}, {s}, {&a}, "sum", [ai](Impl& o) {
    double* g = ai->grad_buffer();
    for (std::size_t i = 0; i < ai->data.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a, std::span<const char> row_mask) {
  require_rank2(a, "mean_rows");
  const int m = a.rows(), n = a.cols();
  if (!row_mask.empty() && static_cast<int>(row_mask.size()) != m)
    throw ShapeError("mean_rows: row mask of " + std::to_string(row_mask.size()) + " for " + shape_str(a.shape()));
  std::vector<char> use(static_cast<std::size_t>(m), 1);
  if (!row_mask.empty()) use.assign(row_mask.begin(), row_mask.end());
  const int count = static_cast<int>(std::count_if(use.begin(), use.end(), [](char c) { return c != 0; }));
  if (count == 0) throw ShapeError("mean_rows: no rows selected");
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    if (use[static_cast<std::size_t>(i)])
      for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += a.values()[static_cast<std::size_t>(i * n + j)];
  for (auto& v : out) v /= count;
  Impl* ai = a.impl();
  return make_result({1, n}, std::move(out), {&a}, "mean_rows", [ai, use, m, n, count](Impl& o) {
    double* g = ai->grad_buffer();
    for (int i = 0; i < m; ++i)
      if (use[static_cast<std::size_t>(i)])
        for (int j = 0; j < n; ++j) g[i * n + j] += o.grad[static_cast<std::size_t>(j)] / count;
  });
}

Tensor slice_cols(const Tensor& a, int start, int count) {
  require_rank2(a, "slice_cols");
  const int m = a.rows(), n = a.cols();
  if (start < 0 || count < 0 || start + count > n)
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                     shape_str(a.shape()));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m * count));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) out.push_back(a.values()[static_cast<std::size_t>(i * n + start + j)]);
  Impl* ai = a.impl();
  return make_result({m, count}, std::move(out), {&a}, "slice_cols", [ai, m, n, start, count](Impl& o) {
    double* g = ai->grad_buffer();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j) g[i * n + start + j] += o.grad[static_cast<std::size_t>(i * count + j)];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  for (const auto& p : parts) require_rank2(p, "concat_cols");
  const int m = parts.front().rows();
  int n = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
    offsets.push_back(n);
    n += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int w = parts[k].cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i * n + offsets[k] + j)] = parts[k].values()[static_cast<std::size_t>(i * w + j)];
  }
  std::vector<Impl*> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result_n({m, n}, std::move(out), parts, "concat_cols", [impls, offsets, m, n](Impl& o) {
    for (std::size_t k = 0; k < impls.size(); ++k) {
      Impl* pi = impls[k];
      if (!pi->requires_grad) continue;
      const int w = pi->shape[1];
      double* g = pi->grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) g[i * w + j] += o.grad[static_cast<std::size_t>(i * n + offsets[k] + j)];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  for (const auto& p : parts) require_rank2(p, "concat_rows");
  const int n = parts.front().cols();
  int m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
    m += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<Impl*> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result_n({m, n}, std::move(out), parts, "concat_rows", [impls](Impl& o) {
    std::size_t off = 0;
    for (Impl* pi : impls) {
      if (pi->requires_grad) {
        double* g = pi->grad_buffer();
        for (std::size_t i = 0; i < pi->data.size(); ++i) g[i] += o.grad[off + i];
      }
      off += pi->data.size();
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats* running, bool training,
                  std::span<const char> row_mask) {
  require_rank2(x, "batch_norm");
  const int m = x.rows(), d = x.cols();
  if (static_cast<int>(gamma.numel()) != d || static_cast<int>(beta.numel()) != d)
    throw ShapeError("batch_norm: affine parameters " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                     " for " + shape_str(x.shape()));
  if (!row_mask.empty() && static_cast<int>(row_mask.size()) != m)
    throw ShapeError("batch_norm: row mask of " + std::to_string(row_mask.size()) + " for " + shape_str(x.shape()));
  const double eps = running ? running->eps : 1e-5;
  std::vector<char> use(static_cast<std::size_t>(m), 1);
  if (!row_mask.empty()) use.assign(row_mask.begin(), row_mask.end());
  const int count = static_cast<int>(std::count_if(use.begin(), use.end(), [](char c) { return c != 0; }));

  std::vector<double> mu(static_cast<std::size_t>(d), 0.0), var(static_cast<std::size_t>(d), 0.0);
  const auto& X = x.values();
  if (training) {
    if (count == 0) throw ShapeError("batch_norm: no rows selected for statistics");
    for (int i = 0; i < m; ++i)
      if (use[static_cast<std::size_t>(i)])
        for (int j = 0; j < d; ++j) mu[static_cast<std::size_t>(j)] += X[static_cast<std::size_t>(i * d + j)];
    for (auto& v : mu) v /= count;
    for (int i = 0; i < m; ++i)
      if (use[static_cast<std::size_t>(i)])
        for (int j = 0; j < d; ++j) {
          const double c = X[static_cast<std::size_t>(i * d + j)] - mu[static_cast<std::size_t>(j)];
          var[static_cast<std::size_t>(j)] += c * c;
        }
    for (auto& v : var) v /= count;
    if (running) {
      if (static_cast<int>(running->mean.size()) != d) *running = BatchNormStats(d);
      const double mom = running->momentum;
      const double unbias = count > 1 ? static_cast<double>(count) / (count - 1) : 1.0;
      for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j) {
        running->mean[j] = (1 - mom) * running->mean[j] + mom * mu[j];
        running->var[j] = (1 - mom) * running->var[j] + mom * var[j] * unbias;
      }
    }
  } else {
    if (!running || static_cast<int>(running->mean.size()) != d)
      throw ShapeError("batch_norm: eval mode needs running statistics for " + std::to_string(d) + " features");
    mu = running->mean;
    var = running->var;
  }

  std::vector<double> inv(static_cast<std::size_t>(d));
  for (std::size_t j = 0; j < inv.size(); ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  std::vector<double> xhat(X.size()), out(X.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(i * d + j);
      const auto jj = static_cast<std::size_t>(j);
      xhat[k] = (X[k] - mu[jj]) * inv[jj];
      out[k] = gamma.values()[jj] * xhat[k] + beta.values()[jj];
    }

  Impl* xi = x.impl();
  Impl* gi = gamma.impl();
  Impl* bi = beta.impl();
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta}, "batch_norm",
      [xi, gi, bi, m, d, count, training, use = std::move(use), mu = std::move(mu), inv = std::move(inv),
       xhat = std::move(xhat)](Impl& o) {
        const auto& G = o.grad;
        if (gi->requires_grad || bi->requires_grad) {
          double* gg = gi->requires_grad ? gi->grad_buffer() : nullptr;
          double* gb = bi->requires_grad ? bi->grad_buffer() : nullptr;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) {
              const auto k = static_cast<std::size_t>(i * d + j);
              if (gg) gg[j] += G[k] * xhat[k];
              if (gb) gb[j] += G[k];
            }
        }
        if (!xi->requires_grad) return;
        double* gx = xi->grad_buffer();
        const auto& X = xi->data;
        for (int j = 0; j < d; ++j) {
          const auto jj = static_cast<std::size_t>(j);
          const double gam = gi->data[jj];
          const double r = inv[jj];
          if (!training) {
            for (int i = 0; i < m; ++i) {
              const auto k = static_cast<std::size_t>(i * d + j);
              gx[k] += G[k] * gam * r;
            }
            continue;
          }
          // Every row's output depends on the statistics of the selected rows.
          double d_r = 0.0, sum_g = 0.0;
          for (int i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(i * d + j);
            const double g = G[k] * gam;
            d_r += g * (X[k] - mu[jj]);
            sum_g += g;
          }
          const double d_var = d_r * (-0.5 * r * r * r);
          const double d_mu = -r * sum_g;
          for (int i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(i * d + j);
            double gk = G[k] * gam * r;
            if (use[static_cast<std::size_t>(i)]) gk += d_var * 2.0 * (X[k] - mu[jj]) / count + d_mu / count;
            gx[k] += gk;
          }
        }
      });
}

// ---- differentiation ------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must hold exactly one value, got " + shape_str(loss.shape()));
  Impl* root = loss.impl();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      Impl* child = node->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* t = *it;
    if (t->node && !t->grad.empty()) t->node->backward(*t);
  }
  for (Impl* t : order)
    if (t->node) {
      t->node.reset();
      t->grad.clear();
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double eps) {
  Tensor x = point.clone(true);
  const Tensor y = f(x);
  backward(y);
  std::vector<double> analytic = x.grad();
  if (analytic.empty()) analytic.assign(x.numel(), 0.0);

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor probe = point.clone(false);
    probe.values()[i] += eps;
    const double up = f(probe).item();
    probe.values()[i] -= 2 * eps;
    const double down = f(probe).item();
    const double numeric = (up - down) / (2 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

// ---- optimization ---------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    const auto& g = p.grad();
    if (g.empty()) continue;
    auto& val = p.values();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1 - beta2_) * g[i] * g[i];
      const double mhat = m_[k][i] / c1;
      const double vhat = v_[k][i] / c2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---- persistence ----------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream header;
  header << "DFC1\n";
  for (const auto& [k, v] : ckpt.meta) header << "meta " << k << " " << v << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    header << "tensor " << name << " " << t.rank();
    for (int d : t.shape()) header << " " << d;
    header << " " << offset << "\n";
    offset += t.numel();
  }
  header << "end\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(t.values().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "DFC1") throw std::runtime_error("'" + path + "' is not a DFC1 checkpoint");
  Checkpoint ckpt;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      Entry e;
      std::size_t rank = 0;
      ls >> e.name >> rank;
      e.shape.resize(rank);
      for (auto& d : e.shape) ls >> d;
      ls >> e.offset;
      if (!ls) throw std::runtime_error("malformed tensor line in '" + path + "': " + line);
      entries.push_back(std::move(e));
    } else {
      throw std::runtime_error("unknown header line in '" + path + "': " + line);
    }
  }
  if (line != "end") throw std::runtime_error("truncated checkpoint header in '" + path + "'");
  std::vector<double> blob;
  {
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(double) != 0) throw std::runtime_error("checkpoint payload misaligned in '" + path + "'");
    blob.resize(rest.size() / sizeof(double));
    std::memcpy(blob.data(), rest.data(), rest.size());
  }
  for (auto& e : entries) {
    const std::size_t n = numel_of(e.shape);
    if (e.offset + n > blob.size()) throw std::runtime_error("checkpoint payload truncated for '" + e.name + "'");
    std::vector<double> v(blob.begin() + static_cast<std::ptrdiff_t>(e.offset),
                          blob.begin() + static_cast<std::ptrdiff_t>(e.offset + n));
    ckpt.tensors.emplace_back(e.name, Tensor::from(e.shape, std::move(v)));
  }
  return ckpt;
}

}  // namespace attnroute::dc
