// Dense f64 tensors with a define-by-run reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Ops executed while gradient
// recording is enabled link their output node to the input nodes; `backward`
// orders that graph topologically and runs each node's local adjoint exactly
// once. Leaf tensors (parameters) keep their gradient buffers between calls,
// so gradients accumulate until `zero_grad`.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace khan {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op has no meaningful output, e.g. averaging zero rows.
class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // empty for leaves

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(const std::vector<std::vector<double>>& rows,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Leading dimension of a matrix; 1 for vectors.
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const;

  void zero_grad();
  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                               std::function<void(detail::Node&)>);
};

/// Builds the output of a differentiable op. The adjoint closure is kept only
/// when recording is on and some input requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn);

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Topologically ordered record of the ops that produced `loss`.
class Tape {
 public:
  explicit Tape(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  /// Each node appears after every node it consumes.
  bool is_topological() const;
  /// Seeds d(loss)=1 and runs every recorded adjoint once, in reverse order.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;
};

/// Accumulates d(loss)/dx into every requires_grad leaf reachable from loss.
void backward(const Tensor& loss);

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x·W + b.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
/// Row softmax where columns with mask 0 get probability exactly 0.
Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> column_mask);
/// Average of the rows whose mask entry is 1; returns a rank-1 tensor.
Tensor mean_rows(const Tensor& x, std::span<const std::uint8_t> row_mask);
Tensor mean_rows(const Tensor& x, const Tensor& row_mask);
/// Multiplies row i of x by weights[i]; weights may be any shape with x.rows() elements.
Tensor scale_rows(const Tensor& x, const Tensor& weights);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t width);
/// Stacks rank-1 [d] or 1×d tensors into an m×d matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Embedding lookup: row i of the result is table[ids[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
/// -log(max(p[index], eps)) for a probability vector p.
Tensor neg_log_pick(const Tensor& probs, std::size_t index, double eps = 1e-12);

/// Compares the tape gradient of f at x with central differences and returns
/// max_i |analytic_i - central_i| / (|central_i| + 1e-10).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5);

/// Same check for a parameter captured by f; the parameter is perturbed in place
/// and restored. Its gradient buffer is reset before the analytic pass.
double finite_diff_check_param(const std::function<Tensor()>& f, Tensor param,
                               double h = 1e-5);

}  // namespace khan
