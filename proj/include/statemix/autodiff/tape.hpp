#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace statemix::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Op : std::uint8_t {
  variable,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  scale,
  shift,
  matmul,
  exp,
  log,
  square,
  sqrt,
  sin,
  cos,
  relu,
  floor_abs,
  sum,
  col_sums,
  row_sums,
  repeat_rows,
  repeat_cols,
  concat_rows,
  slice_rows,
  gather_rows,
  gather_cols,
  softmax,
  logsumexp,
  col_logsumexp,
  stop_gradient,
};

const char* op_name(Op op);

/// One computation record. `value` is the primal output; the adjoint rule of
/// every op can be evaluated from the parents' values, this value and `aux`.
struct Node {
  Op op;
  bool requires_grad;
  std::vector<std::int32_t> parents;
  Matrix value;
  double aux = 0.0;
  Index offset = 0;
  std::vector<Index> indices;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; the tape must outlive it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Primal of a 1x1 node.
  double scalar() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Append-only reverse-mode tape. Not thread-safe; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf.
  Var variable(Matrix value);
  /// Leaf with no gradient; backward never reaches it.
  Var constant(Matrix value);
  Var scalar_constant(double value);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  Var push(Op op, std::vector<std::int32_t> parents, Matrix value, double aux = 0.0, Index offset = 0,
           std::vector<Index> indices = {});

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

/// Adjoints of every node reached by a backward pass.
class Gradients {
 public:
  explicit Gradients(std::vector<Matrix> adjoints) : adjoints_(std::move(adjoints)) {}

  /// d(root)/d(v). Zero-filled when v did not influence the root.
  Matrix wrt(Var v) const;
  /// True when the backward pass produced an adjoint for `v`.
  bool reached(Var v) const;

 private:
  std::vector<Matrix> adjoints_;
};

/// Reverse sweep from a 1x1 root. Visits each node at most once, in
/// descending id order.
Gradients backward(Var root);

// Elementwise binary ops require identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);

/// Matrix product; a (m x n) times b (n x p). A vector is an n x 1 matrix.
Var matmul(Var a, Var b);

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
Var sin(Var a);
Var cos(Var a);
/// max(0, x) with zero derivative at the kink.
Var relu(Var a);
/// max(|x|, floor); derivative sign(x) above the floor, zero at or below it.
Var floor_abs(Var a, double floor);

/// Sum of all entries, 1x1.
Var sum(Var a);
/// Column sums, 1 x cols.
Var col_sums(Var a);
/// Row sums, rows x 1.
Var row_sums(Var a);
/// Stacks `n` copies of a 1 x k row.
Var repeat_rows(Var row, Index n);
/// Places `n` copies of a d x 1 column side by side.
Var repeat_cols(Var col, Index n);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Index offset, Index count);
/// out.row(i) = a.row(idx[i]); adjoint scatter-adds.
Var gather_rows(Var a, std::vector<Index> idx);
/// out.col(j) = a.col(idx[j]); adjoint scatter-adds.
Var gather_cols(Var a, std::vector<Index> idx);

/// Softmax of each column.
Var softmax(Var a);
/// Stabilized log-sum-exp over all entries, 1x1.
Var logsumexp(Var a);
/// Stabilized log-sum-exp of each column, 1 x cols.
Var col_logsumexp(Var a);

/// Identity on the primal, blocks the adjoint.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }

/// Stabilized log-sum-exp of a plain array.
double logsumexp(const Eigen::Ref<const Eigen::ArrayXd>& x);

}  // namespace statemix::ad
