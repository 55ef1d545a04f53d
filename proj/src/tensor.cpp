#include "khan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace khan {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3)
    throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape));
  for (auto d : shape)
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

// Accumulates into parent i when it takes part in differentiation.
double* grad_of(detail::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (product(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) throw ShapeError("matrix: no rows");
  std::vector<double> data;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw ShapeError("matrix: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), rows.front().size()}, std::move(data), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  auto t = zeros({n, n}, requires_grad);
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : shape()[0]; }

std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data.at(r * cols() + c);
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- tape -------------------------------------------------------------------

Tape::Tape(const Tensor& loss) : root_(loss.node()) {
  if (!root_) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  if (!root_->requires_grad) return;

  // Iterative post-order DFS; emitted order has producers before consumers.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root_.get(), 0}};
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

bool Tape::is_topological() const {
  std::unordered_set<const detail::Node*> done;
  for (const auto* n : order_) {
    for (const auto& p : n->parents)
      if (p->requires_grad && !done.count(p.get())) return false;
    if (!done.insert(n).second) return false;
  }
  return true;
}

void Tape::backward() {
  if (order_.empty()) return;
  // Interior adjoints restart from zero so replaying a tape is idempotent;
  // leaves keep accumulating.
  for (auto* n : order_) {
    if (n->backward_fn)
      n->grad.assign(n->data.size(), 0.0);
    else
      n->ensure_grad();
  }
  root_->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

void backward(const Tensor& loss) { Tape(loss).backward(); }

// ---- ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(m * p, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t q = 0; q < k; ++q) {
      const double av = A[i * k + q];
      const double* brow = B + q * p;
      double* orow = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  return make_op_result({m, p}, std::move(out), {a, b}, [m, k, p](detail::Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->data.data();
    const double* B = self.parents[1]->data.data();
    if (double* dA = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < k; ++q) {
          double s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += G[i * p + j] * B[q * p + j];
          dA[i * k + q] += s;
        }
    if (double* dB = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < k; ++q) {
          const double av = A[i * k + q];
          for (std::size_t j = 0; j < p; ++j) dB[q * p + j] += av * G[i * p + j];
        }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_op_result({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* d = grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * B[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * A[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_op_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.numel() != n)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                     shape_str(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.data()[j];
  return make_op_result(x.shape(), std::move(out), {x, bias}, [m, n](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) d[i] += self.grad[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.data()[i]);
  return make_op_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    const auto& X = self.parents[0]->data;
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (X[i] > 0.0) d[i] += self.grad[i];
  });
}

namespace {

Tensor softmax_impl(const Tensor& x, std::span<const std::uint8_t> mask) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (!mask.empty()) {
    if (mask.size() != n)
      throw ShapeError("masked_softmax_rows: mask length " + std::to_string(mask.size()) +
                       " vs " + std::to_string(n) + " columns");
    if (std::none_of(mask.begin(), mask.end(), [](auto v) { return v != 0; }))
      throw DegenerateInputError("masked_softmax_rows: every column is masked");
  }
  auto active = [&](std::size_t j) { return mask.empty() || mask[j] != 0; };
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (active(j)) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (active(j)) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_op_result(x.shape(), std::move(out), {x}, [m, n](detail::Node& self) {
    double* d = grad_of(self, 0);
    if (!d) return;
    const auto& Y = self.data;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        d[i * n + j] += Y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, {}); }

Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> column_mask) {
  return softmax_impl(x, column_mask);
}

Tensor mean_rows(const Tensor& x, std::span<const std::uint8_t> row_mask) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (row_mask.size() != m)
    throw ShapeError("mean_rows: mask length " + std::to_string(row_mask.size()) +
                     " vs " + std::to_string(m) + " rows");
  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
  std::size_t count = 0;
  for (auto v : mask) {
    if (v > 1) throw std::invalid_argument("mean_rows: mask entries must be 0 or 1");
    count += v;
  }
  if (count == 0) throw DegenerateInputError("mean_rows: mask selects no rows");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (mask[i])
      for (std::size_t j = 0; j < n; ++j) out[j] += x.data()[i * n + j];
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& v : out) v *= inv;
  return make_op_result({n}, std::move(out), {x},
                        [m, n, inv, mask = std::move(mask)](detail::Node& self) {
                          if (double* d = grad_of(self, 0))
                            for (std::size_t i = 0; i < m; ++i)
                              if (mask[i])
                                for (std::size_t j = 0; j < n; ++j)
                                  d[i * n + j] += self.grad[j] * inv;
                        });
}

Tensor mean_rows(const Tensor& x, const Tensor& row_mask) {
  std::vector<std::uint8_t> mask(row_mask.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = row_mask.data()[i];
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("mean_rows: mask entries must be 0 or 1");
    mask[i] = v == 1.0;
  }
  return mean_rows(x, mask);
}

Tensor scale_rows(const Tensor& x, const Tensor& weights) {
  require_matrix(x, "scale_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (weights.numel() != m)
    throw ShapeError("scale_rows: " + std::to_string(weights.numel()) + " weights for " +
                     std::to_string(m) + " rows");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = x.data()[i * n + j] * weights.data()[i];
  return make_op_result(x.shape(), std::move(out), {x, weights}, [m, n](detail::Node& self) {
    const auto& X = self.parents[0]->data;
    const auto& W = self.parents[1]->data;
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[i * n + j] * W[i];
    if (double* d = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += self.grad[i * n + j] * X[i * n + j];
        d[i] += s;
      }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m)
      throw ShapeError("concat_cols: row counts differ " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    widths.push_back(p.cols());
  }
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].data().data() + i * widths[k], widths[k],
                  out.data() + i * total + offset);
    offset += widths[k];
  }
  return make_op_result({m, total}, std::move(out), parts,
                        [m, total, widths](detail::Node& self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            if (double* d = grad_of(self, k))
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < widths[k]; ++j)
                                  d[i * widths[k] + j] += self.grad[i * total + offset + j];
                            offset += widths[k];
                          }
                        });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t width) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (width == 0 || begin + width > n)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + width) + ") outside " + shape_str(x.shape()));
  std::vector<double> out(m * width);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().data() + i * n + begin, width, out.data() + i * width);
  return make_op_result({m, width}, std::move(out), {x},
                        [m, n, begin, width](detail::Node& self) {
                          if (double* d = grad_of(self, 0))
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < width; ++j)
                                d[i * n + begin + j] += self.grad[i * width + j];
                        });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t n = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.rows() != 1 || r.numel() != n)
      throw ShapeError("stack_rows: expected [" + std::to_string(n) + "] rows, got " +
                       shape_str(r.shape()));
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  const std::size_t m = rows.size();
  return make_op_result({m, n}, std::move(out), rows, [m, n](detail::Node& self) {
    for (std::size_t i = 0; i < m; ++i)
      if (double* d = grad_of(self, i))
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  std::vector<std::int32_t> index(ids.begin(), ids.end());
  std::vector<double> out(index.size() * d);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= rows)
      throw ShapeError("gather_rows: id " + std::to_string(index[i]) + " outside table of " +
                       std::to_string(rows) + " rows");
    std::copy_n(table.data().data() + index[i] * d, d, out.data() + i * d);
  }
  const std::size_t m = index.size();
  return make_op_result({m, d}, std::move(out), {table},
                        [d, index = std::move(index)](detail::Node& self) {
                          if (double* g = grad_of(self, 0))
                            for (std::size_t i = 0; i < index.size(); ++i)
                              for (std::size_t j = 0; j < d; ++j)
                                g[index[i] * d + j] += self.grad[i * d + j];
                        });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (product(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return make_op_result({1}, {s}, {x}, [](detail::Node& self) {
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.parents[0]->data.size(); ++i) d[i] += self.grad[0];
  });
}

Tensor sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return make_op_result({1}, {s}, {x}, [](detail::Node& self) {
    const auto& X = self.parents[0]->data;
    if (double* d = grad_of(self, 0))
      for (std::size_t i = 0; i < X.size(); ++i) d[i] += 2.0 * X[i] * self.grad[0];
  });
}

Tensor neg_log_pick(const Tensor& probs, std::size_t index, double eps) {
  if (index >= probs.numel())
    throw ShapeError("neg_log_pick: index " + std::to_string(index) + " outside " +
                     shape_str(probs.shape()));
  const double p = probs.data()[index];
  const bool clamped = p < eps;
  const double v = -std::log(clamped ? eps : p);
  return make_op_result({1}, {v}, {probs}, [index, p, clamped](detail::Node& self) {
    if (clamped) return;
    if (double* d = grad_of(self, 0)) d[index] -= self.grad[0] / p;
  });
}

// ---- gradient checking ----------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
  Tensor leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return finite_diff_check_param([&] { return f(leaf); }, leaf, h);
}

double finite_diff_check_param(const std::function<Tensor()>& f, Tensor param, double h) {
  param.mutable_grad();
  param.zero_grad();
  backward(f());
  std::vector<double> analytic(param.grad().begin(), param.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  auto values = param.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f().item();
    values[i] = saved - h;
    const double down = f().item();
    values[i] = saved;
    const double central = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - central) / (std::abs(central) + 1e-10));
  }
  return worst;
}

}  // namespace khan
