#pragma once

// Reverse-mode differentiation over dense double matrices.
//
// A Tape owns every intermediate value. Ops append nodes in evaluation order,
// so the node list is already topologically sorted and backward() is a single
// reverse sweep. Scalars are 1x1 matrices.

#include "mrsr/kernels.hpp"
#include "mrsr/types.hpp"

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace mrsr {

using Rng = std::mt19937_64;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const;
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during the reverse sweep with the node's own id; reads
  /// grad(self) and pushes contributions to parents via accumulate().
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf that receives no gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is kept after backward().
  Var variable(Matrix value);
  /// Generic node. `backward` runs only if some parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target wrt node `id`. A 0x0 matrix means zero.
  [[nodiscard]] const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds `contribution` to the gradient of node `id` (no-op for constants).
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& contribution) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    node.grad += contribution;
  }
  /// Mutable access for sparse accumulation (row scatter). Allocates zeros on first use.
  Matrix* grad_buffer(std::size_t id);

  /// Reverse sweep from a 1x1 node. Clears gradients of any earlier sweep.
  void backward(Var loss);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  /// Drops every node recorded after the first `size` nodes.
  void truncate(std::size_t size) {
    if (size < nodes_.size()) nodes_.resize(size);
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- kernels --------------------------------------------------------------

/// A[m x k] * B[k x n].
Var matmul(Var a, Var b);
/// A[m x k] * B[n x k]^T.
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
/// a * s where s is a 1x1 node.
Var scale_by(Var a, Var s);
/// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var relu(Var a);
/// Per-row normalisation to zero mean / unit (population) variance, then affine.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-8);
/// Row softmax over allowed entries; rows with nothing allowed are zero.
Var softmax_masked(Var logits, const MaskMatrix& allowed);
/// Inverted dropout in training mode, identity otherwise.
Var dropout(Var x, double p, Rng& rng, bool training);
/// Rows of `table` picked by `indices` (embedding lookup).
Var gather_rows(Var table, std::span<const ItemIndex> indices);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
/// Row-wise dot products: out[i] = a[i] . b[i], shape n x 1.
Var row_dot(Var a, Var b);
Var sum(Var a);
/// Sum of squares, skipping the first `skip_rows` rows.
Var sum_squares(Var a, Eigen::Index skip_rows = 0);

/// How the negative half of a sigmoid cross-entropy is written.
///  literal:  log sigmoid(1 - x)
///  standard: log(1 - sigmoid(x)) = log sigmoid(-x)
enum class BceForm { literal, standard };

/// -sum_i weight_i * [ label_i * log s(x_i) + (1 - label_i) * neg(x_i) ] with the
/// log-sigmoid argument clamped to +-30. Entries with weight 0 are skipped.
Var binary_xent(Var scores, const Matrix& labels, const Matrix& weights, BceForm form);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double factor, Var a) { return scale(a, factor); }

// ---- gradient verification --------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_coordinate = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Compares `analytic` with central differences (f(x+h) - f(x-h)) / 2h of
/// `f` at `point`. Checks every coordinate when `max_coords` is 0 or at least
/// the dimension, otherwise a seeded random subset of `max_coords`. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
GradCheckResult finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                                  const Vector& analytic, double h = 1e-5, std::size_t max_coords = 0,
                                  std::uint64_t seed = 0, double abs_floor = 1e-6);

}  // namespace mrsr
