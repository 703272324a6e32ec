#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ivg::ad {

using Matrix = Eigen::MatrixXd;
using RowMask = std::vector<bool>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

/// Reverse-mode autodiff over dense double matrices.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse.
/// Parameter leaves point at externally owned storage and carry a slot index
/// so their gradients can be flushed into a per-slot buffer.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self, const Matrix& out_grad)>;

  /// With record_gradients == false parameter leaves are treated as constants.
  explicit Tape(bool record_gradients = true) : record_(record_gradients) { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable leaf that owns its value (used for inputs under test).
  Var input(Matrix value);
  /// Parameter leaf; the same slot always maps to the same node on one tape.
  Var param(const Matrix& value, int slot);

  Var push(Matrix value, std::initializer_list<Var> inputs, Backward back);
  Var push(Matrix value, bool needs_grad, Backward back);

  const Matrix& value(int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext ? *n.ext : n.value;
  }
  /// Gradient after backward(); empty matrix when nothing flowed into the node.
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }
  /// Mutable gradient buffer, zero-initialised on first touch.
  Matrix& grad_buffer(int id);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and back-propagates.
  void backward(Var root);
  /// Adds every parameter leaf's gradient into grads[slot].
  void flush_param_grads(std::span<Matrix> grads) const;

 private:
  struct Node {
    Matrix value;
    const Matrix* ext = nullptr;
    Matrix grad;
    Backward back;
    bool requires_grad = false;
    int slot = -1;
  };
  std::vector<Node> nodes_;
  std::unordered_map<int, int> slot_nodes_;
  bool record_ = true;
};

inline const Matrix& Var::value() const { return tape->value(id); }

// --- Linear algebra ----------------------------------------------------------
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// --- Elementwise -------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
/// log(1 + exp(x)), computed stably.
Var softplus(Var a);

// --- Broadcasting ------------------------------------------------------------
/// a (L x d) + r (1 x d) added to every row.
Var add_row(Var a, Var r);
/// a (L x d) + c (L x 1) added to every column.
Var add_col(Var a, Var c);
/// a (L x d) scaled columnwise by r (1 x d).
Var mul_row(Var a, Var r);
/// Tiles a 1 x d row into L x d.
Var repeat_rows(Var r, Eigen::Index count);

// --- Shape -------------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var row(Var a, Eigen::Index i);
/// Rows of `table` at `indices` (embedding lookup); gradients scatter-add.
Var gather_rows(Var table, std::span<const int> indices);

// --- Reductions --------------------------------------------------------------
Var sum(Var a);
Var mean_rows(Var a);
/// Columnwise max over the rows selected by `mask` (all rows when empty).
/// Ties route the gradient to the first maximal row.
Var max_rows(Var a, const RowMask& mask = {});
/// Mean of the entries of a 1 x T row selected by `mask`.
Var masked_mean(Var a, const RowMask& mask);
/// sum_k w_k * v_k over 1x1 nodes.
Var linear_combination(std::span<const std::pair<double, Var>> terms);

// --- Neural-network primitives ----------------------------------------------
/// Row softmax. Columns with col_mask[j] == false get probability 0.
/// Throws ConfigError when every column is masked.
Var softmax_rows(Var a, const RowMask& col_mask = {});
/// Per-row layer normalization with 1 x d gain and bias.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Depthwise 1-D convolution along rows with zero "same" padding.
/// x: L x d, kernel: k x d (k odd), bias: 1 x d.
Var depthwise_conv1d(Var x, Var kernel, Var bias);
/// -log(max(p[idx], eps)) for a 1 x T probability row. Gradient is zero when clamped.
Var neg_log_pick(Var p, Eigen::Index idx, double eps);

}  // namespace ivg::ad
