#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense float64 matrices.
//
// A Tensor is a shared handle to a graph node. Operations record their
// parents and a backward closure while gradient recording is enabled;
// `backward(loss)` runs the closures in reverse topological order and
// accumulates into every node that requires a gradient. Parameters are
// leaf nodes that persist across steps.

namespace c2m::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor scalar(double value);
  /// Leaf that always records gradients, regardless of grad mode.
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// Direct write access; only valid for leaves (parameter updates, tests).
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == value().size() && value().size() > 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// True while operations record the graph (thread-local, default on).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Accumulates d(root)/d(node) into every reachable node. root must be 1x1.
void backward(const Tensor& root);

Tensor detach(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x * W + b, with b a 1 x out row broadcast over rows.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a * s for a 1x1 tensor s.
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor reciprocal(const Tensor& a);
/// Gradient is zero wherever the clamp is active.
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor elu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// log(max(a, floor)); gradient is zero below the floor.
Tensor log_clamped(const Tensor& a, double floor);

// Row-wise normalizations.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Each row scaled to unit L2 norm. Rows with norm below eps become zero
/// (and pass no gradient); their indices are reported through `zero_rows`.
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12,
                         std::vector<Eigen::Index>* zero_rows = nullptr);

// Shape manipulation and reductions.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

/// Mean over rows with target >= 0 of -log softmax(logits)[row, target].
/// Rows with a negative target are masked out.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Multi-head scaled dot-product attention over pre-projected inputs.
/// With `causal_offset` set, query i sees keys j <= i + offset.
Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values, int heads,
                 std::optional<Eigen::Index> causal_offset = std::nullopt);

/// Hard selection with a straight-through gradient: the forward value is a
/// bit-exact copy of options[chosen]; backward treats the output as
/// sum_i weights[i] * options[i] evaluated at the one-hot forward weights, so
/// options[chosen] receives the incoming gradient and weights[i] receives
/// <grad, options[i]>.
Tensor select_straight_through(std::span<const Tensor> options, const Tensor& weights,
                               std::size_t chosen);

}  // namespace c2m::ag
