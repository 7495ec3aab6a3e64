#include "statemix/autodiff/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace statemix::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + ")");
}

void same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw std::invalid_argument("operands live on different tapes");
  }
}

void same_shape(const char* op, Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error(op, a.value(), b.value());
  }
}

Var unary(Op op, Var a, Matrix value, double aux = 0.0) {
  return a.tape().push(op, {a.id()}, std::move(value), aux);
}

Var binary(Op op, Var a, Var b, Matrix value) {
  return a.tape().push(op, {a.id(), b.id()}, std::move(value));
}

void accumulate(std::vector<Matrix>& adj, std::int32_t id, const Matrix& contribution) {
  auto& slot = adj[static_cast<std::size_t>(id)];
  if (slot.size() == 0) {
    slot = contribution;
  } else {
    slot += contribution;
  }
}

double max_or_neg_inf(const Eigen::Ref<const Eigen::ArrayXd>& x) {
  return x.size() == 0 ? -std::numeric_limits<double>::infinity() : x.maxCoeff();
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::variable: return "variable";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::matmul: return "matmul";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::relu: return "relu";
    case Op::floor_abs: return "floor_abs";
    case Op::sum: return "sum";
    case Op::col_sums: return "col_sums";
    case Op::row_sums: return "row_sums";
    case Op::repeat_rows: return "repeat_rows";
    case Op::repeat_cols: return "repeat_cols";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_rows: return "slice_rows";
    case Op::gather_rows: return "gather_rows";
    case Op::gather_cols: return "gather_cols";
    case Op::softmax: return "softmax";
    case Op::logsumexp: return "logsumexp";
    case Op::col_logsumexp: return "col_logsumexp";
    case Op::stop_gradient: return "stop_gradient";
  }
  return "?";
}

const Matrix& Var::value() const { return tape_->node(id_).value; }

double Var::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("scalar(): node is not 1x1");
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::variable(Matrix value) { return push(Op::variable, {}, std::move(value)); }

Var Tape::constant(Matrix value) { return push(Op::constant, {}, std::move(value)); }

Var Tape::scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::push(Op op, std::vector<std::int32_t> parents, Matrix value, double aux, Index offset,
               std::vector<Index> indices) {
  bool requires_grad = op == Op::variable;
  if (op != Op::stop_gradient) {
    for (auto p : parents) {
      requires_grad = requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
    }
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{op, requires_grad, std::move(parents), std::move(value), aux, offset, std::move(indices)});
  return Var{this, id};
}

Matrix Gradients::wrt(Var v) const {
  const auto& a = adjoints_.at(static_cast<std::size_t>(v.id()));
  if (a.size() == 0) {
    return Matrix::Zero(v.rows(), v.cols());
  }
  return a;
}

bool Gradients::reached(Var v) const { return adjoints_.at(static_cast<std::size_t>(v.id())).size() != 0; }

Var add(Var a, Var b) {
  same_shape("add", a, b);
  return binary(Op::add, a, b, a.value() + b.value());
}

Var sub(Var a, Var b) {
  same_shape("sub", a, b);
  return binary(Op::sub, a, b, a.value() - b.value());
}

Var mul(Var a, Var b) {
  same_shape("mul", a, b);
  return binary(Op::mul, a, b, a.value().cwiseProduct(b.value()));
}

Var div(Var a, Var b) {
  same_shape("div", a, b);
  return binary(Op::div, a, b, a.value().cwiseQuotient(b.value()));
}

Var neg(Var a) { return unary(Op::neg, a, -a.value()); }

Var scale(Var a, double c) { return unary(Op::scale, a, c * a.value(), c); }

Var shift(Var a, double c) { return unary(Op::shift, a, (a.value().array() + c).matrix(), c); }

Var matmul(Var a, Var b) {
  same_tape(a, b);
  if (a.cols() != b.rows()) {
    shape_error("matmul", a.value(), b.value());
  }
  Matrix out = a.value() * b.value();
  return binary(Op::matmul, a, b, std::move(out));
}

Var exp(Var a) { return unary(Op::exp, a, a.value().array().exp().matrix()); }

Var log(Var a) { return unary(Op::log, a, a.value().array().log().matrix()); }

Var square(Var a) { return unary(Op::square, a, a.value().array().square().matrix()); }

Var sqrt(Var a) { return unary(Op::sqrt, a, a.value().array().sqrt().matrix()); }

Var sin(Var a) { return unary(Op::sin, a, a.value().array().sin().matrix()); }

Var cos(Var a) { return unary(Op::cos, a, a.value().array().cos().matrix()); }

Var relu(Var a) { return unary(Op::relu, a, a.value().cwiseMax(0.0)); }

Var floor_abs(Var a, double floor) {
  if (!(floor >= 0.0)) {
    throw std::invalid_argument("floor_abs: floor must be non-negative");
  }
  return unary(Op::floor_abs, a, a.value().cwiseAbs().cwiseMax(floor), floor);
}

Var sum(Var a) { return unary(Op::sum, a, Matrix::Constant(1, 1, a.value().sum())); }

Var col_sums(Var a) { return unary(Op::col_sums, a, a.value().colwise().sum()); }

Var row_sums(Var a) { return unary(Op::row_sums, a, a.value().rowwise().sum()); }

Var repeat_rows(Var row, Index n) {
  if (row.rows() != 1 || n < 1) {
    throw std::invalid_argument("repeat_rows: expects a 1 x k row and n >= 1");
  }
  return unary(Op::repeat_rows, row, row.value().replicate(n, 1));
}

Var repeat_cols(Var col, Index n) {
  if (col.cols() != 1 || n < 1) {
    throw std::invalid_argument("repeat_cols: expects a d x 1 column and n >= 1");
  }
  return unary(Op::repeat_cols, col, col.value().replicate(1, n));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no inputs");
  }
  Index rows = 0;
  const Index cols = parts.front().cols();
  std::vector<std::int32_t> parents;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.cols() != cols) {
      shape_error("concat_rows", parts.front().value(), p.value());
    }
    rows += p.rows();
    parents.push_back(p.id());
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts.front().tape().push(Op::concat_rows, std::move(parents), std::move(out));
}

Var slice_rows(Var a, Index offset, Index count) {
  if (offset < 0 || count < 0 || offset + count > a.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  return a.tape().push(Op::slice_rows, {a.id()}, a.value().middleRows(offset, count), 0.0, offset);
}

Var gather_rows(Var a, std::vector<Index> idx) {
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) {
      throw std::out_of_range("gather_rows: index out of range");
    }
    out.row(static_cast<Index>(i)) = a.value().row(idx[i]);
  }
  return a.tape().push(Op::gather_rows, {a.id()}, std::move(out), 0.0, 0, std::move(idx));
}

Var gather_cols(Var a, std::vector<Index> idx) {
  Matrix out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.cols()) {
      throw std::out_of_range("gather_cols: index out of range");
    }
    out.col(static_cast<Index>(j)) = a.value().col(idx[j]);
  }
  return a.tape().push(Op::gather_cols, {a.id()}, std::move(out), 0.0, 0, std::move(idx));
}

Var softmax(Var a) {
  if (a.value().size() == 0) {
    throw std::invalid_argument("softmax: empty input");
  }
  Matrix out(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    const double m = a.value().col(j).maxCoeff();
    out.col(j) = (a.value().col(j).array() - m).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return unary(Op::softmax, a, std::move(out));
}

double logsumexp(const Eigen::Ref<const Eigen::ArrayXd>& x) {
  const double m = max_or_neg_inf(x);
  if (std::isinf(m)) {
    return m;
  }
  return m + std::log((x - m).exp().sum());
}

Var logsumexp(Var a) {
  if (a.value().size() == 0) {
    throw std::invalid_argument("logsumexp: empty input");
  }
  const Eigen::Map<const Eigen::ArrayXd> flat(a.value().data(), a.value().size());
  return unary(Op::logsumexp, a, Matrix::Constant(1, 1, logsumexp(flat)));
}

Var col_logsumexp(Var a) {
  if (a.value().size() == 0) {
    throw std::invalid_argument("col_logsumexp: empty input");
  }
  Matrix out(1, a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    out(0, j) = logsumexp(a.value().col(j).array());
  }
  return unary(Op::col_logsumexp, a, std::move(out));
}

Var stop_gradient(Var a) { return unary(Op::stop_gradient, a, a.value()); }

Gradients backward(Var root) {
  if (!root.valid() || root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 node");
  }
  const Tape& tape = root.tape();
  std::vector<Matrix> adj(tape.size());
  adj[static_cast<std::size_t>(root.id())] = Matrix::Ones(1, 1);

  for (std::int32_t i = root.id(); i >= 0; --i) {
    const Node& n = tape.node(i);
    const Matrix& g = adj[static_cast<std::size_t>(i)];
    if (!n.requires_grad || g.size() == 0 || n.parents.empty()) {
      continue;
    }
    const auto pa = n.parents[0];
    const Node& a = tape.node(pa);
    auto flows = [&](std::int32_t p) { return tape.node(p).requires_grad; };

    switch (n.op) {
      case Op::variable:
      case Op::constant:
      case Op::stop_gradient:
        break;
      case Op::add:
        if (flows(pa)) accumulate(adj, pa, g);
        if (flows(n.parents[1])) accumulate(adj, n.parents[1], g);
        break;
      case Op::sub:
        if (flows(pa)) accumulate(adj, pa, g);
        if (flows(n.parents[1])) accumulate(adj, n.parents[1], -g);
        break;
      case Op::mul: {
        const auto pb = n.parents[1];
        if (flows(pa)) accumulate(adj, pa, g.cwiseProduct(tape.node(pb).value));
        if (flows(pb)) accumulate(adj, pb, g.cwiseProduct(a.value));
        break;
      }
      case Op::div: {
        const auto pb = n.parents[1];
        const Matrix& b = tape.node(pb).value;
        if (flows(pa)) accumulate(adj, pa, g.cwiseQuotient(b));
        if (flows(pb)) accumulate(adj, pb, -g.cwiseProduct(n.value).cwiseQuotient(b));
        break;
      }
      case Op::neg:
        accumulate(adj, pa, -g);
        break;
      case Op::scale:
        accumulate(adj, pa, n.aux * g);
        break;
      case Op::shift:
        accumulate(adj, pa, g);
        break;
      case Op::matmul: {
        const auto pb = n.parents[1];
        const Matrix& b = tape.node(pb).value;
        if (flows(pa)) accumulate(adj, pa, g * b.transpose());
        if (flows(pb)) accumulate(adj, pb, a.value.transpose() * g);
        break;
      }
      case Op::exp:
        accumulate(adj, pa, g.cwiseProduct(n.value));
        break;
      case Op::log:
        accumulate(adj, pa, g.cwiseQuotient(a.value));
        break;
      case Op::square:
        accumulate(adj, pa, 2.0 * g.cwiseProduct(a.value));
        break;
      case Op::sqrt:
        accumulate(adj, pa, (0.5 * g.array() / n.value.array()).matrix());
        break;
      case Op::sin:
        accumulate(adj, pa, (g.array() * a.value.array().cos()).matrix());
        break;
      case Op::cos:
        accumulate(adj, pa, (-g.array() * a.value.array().sin()).matrix());
        break;
      case Op::relu:
        accumulate(adj, pa, (a.value.array() > 0.0).select(g, 0.0).matrix());
        break;
      case Op::floor_abs: {
        const auto x = a.value.array();
        const double fl = n.aux;
        Matrix d = (x > fl).select(g.array(), (x < -fl).select(-g.array(), 0.0)).matrix();
        accumulate(adj, pa, d);
        break;
      }
      case Op::sum:
        accumulate(adj, pa, Matrix::Constant(a.value.rows(), a.value.cols(), g(0, 0)));
        break;
      case Op::col_sums:
        accumulate(adj, pa, g.replicate(a.value.rows(), 1));
        break;
      case Op::row_sums:
        accumulate(adj, pa, g.replicate(1, a.value.cols()));
        break;
      case Op::repeat_rows:
        accumulate(adj, pa, g.colwise().sum());
        break;
      case Op::repeat_cols:
        accumulate(adj, pa, g.rowwise().sum());
        break;
      case Op::concat_rows: {
        Index r = 0;
        for (auto p : n.parents) {
          const Index rows = tape.node(p).value.rows();
          if (flows(p)) accumulate(adj, p, g.middleRows(r, rows));
          r += rows;
        }
        break;
      }
      case Op::slice_rows: {
        Matrix d = Matrix::Zero(a.value.rows(), a.value.cols());
        d.middleRows(n.offset, n.value.rows()) = g;
        accumulate(adj, pa, d);
        break;
      }
      case Op::gather_rows: {
        Matrix d = Matrix::Zero(a.value.rows(), a.value.cols());
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          d.row(n.indices[r]) += g.row(static_cast<Index>(r));
        }
        accumulate(adj, pa, d);
        break;
      }
      case Op::gather_cols: {
        Matrix d = Matrix::Zero(a.value.rows(), a.value.cols());
        for (std::size_t c = 0; c < n.indices.size(); ++c) {
          d.col(n.indices[c]) += g.col(static_cast<Index>(c));
        }
        accumulate(adj, pa, d);
        break;
      }
      case Op::softmax: {
        const Eigen::RowVectorXd inner = g.cwiseProduct(n.value).colwise().sum();
        Matrix d = n.value.cwiseProduct(g - inner.replicate(g.rows(), 1));
        accumulate(adj, pa, d);
        break;
      }
      case Op::logsumexp: {
        const double y = n.value(0, 0);
        if (std::isinf(y)) break;
        accumulate(adj, pa, (g(0, 0) * (a.value.array() - y).exp()).matrix());
        break;
      }
      case Op::col_logsumexp: {
        Matrix d(a.value.rows(), a.value.cols());
        for (Index j = 0; j < d.cols(); ++j) {
          const double y = n.value(0, j);
          d.col(j) = std::isinf(y) ? Eigen::VectorXd::Zero(d.rows())
                                   : (g(0, j) * (a.value.col(j).array() - y).exp()).matrix().eval();
        }
        accumulate(adj, pa, d);
        break;
      }
    }
  }
  return Gradients{std::move(adj)};
}

}  // namespace statemix::ad
