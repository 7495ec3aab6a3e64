#include "statemix/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace statemix::ad {
namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = u(rng);
  }
  return m;
}

// Entries bounded away from zero so kinked primitives are smooth at h = 1e-5.
Matrix away_from_zero(Rng& rng, Index rows, Index cols, double gap) {
  Matrix m = random_matrix(rng, rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    v = (v >= 0 ? 1.0 : -1.0) * (gap + std::abs(v));
  }
  return m;
}

// Weighted sum so that every output entry has a distinct adjoint.
Var weighted_sum(Tape& tape, Var out, std::uint64_t salt) {
  Rng rng{salt};
  Var w = tape.constant(random_matrix(rng, out.rows(), out.cols(), 0.5, 1.5));
  return sum(mul(out, w));
}

}  // namespace

double evaluate(const GraphFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) {
    leaves.push_back(tape.variable(m));
  }
  return fn(tape, leaves).scalar();
}

std::vector<Matrix> analytic_gradient(const GraphFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) {
    leaves.push_back(tape.variable(m));
  }
  const Var root = fn(tape, leaves);
  const Gradients grads = backward(root);
  std::vector<Matrix> out;
  out.reserve(leaves.size());
  for (const auto& v : leaves) {
    out.push_back(grads.wrt(v));
  }
  return out;
}

std::vector<Matrix> numeric_gradient(const GraphFn& fn, const std::vector<Matrix>& inputs, double h) {
  std::vector<Matrix> work = inputs;
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix g(inputs[i].rows(), inputs[i].cols());
    for (Index e = 0; e < inputs[i].size(); ++e) {
      const double x0 = inputs[i].data()[e];
      work[i].data()[e] = x0 + h;
      const double fp = evaluate(fn, work);
      work[i].data()[e] = x0 - h;
      const double fm = evaluate(fn, work);
      work[i].data()[e] = x0;
      g.data()[e] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric) {
  double diff = 0.0;
  // Gradients smaller than the floor are compared in absolute terms; central
  // differences of an O(1) function carry ~1e-11 of roundoff at h = 1e-5.
  double scale = 1e-3;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (analytic[i].size() == 0) continue;
    diff = std::max(diff, (analytic[i] - numeric[i]).cwiseAbs().maxCoeff());
    scale = std::max({scale, analytic[i].cwiseAbs().maxCoeff(), numeric[i].cwiseAbs().maxCoeff()});
  }
  if (!std::isfinite(diff)) {
    return std::numeric_limits<double>::infinity();
  }
  return diff / scale;
}

CheckResult check_gradient(std::string name, const GraphFn& fn, const std::vector<Matrix>& inputs, double h,
                           double tolerance) {
  const auto a = analytic_gradient(fn, inputs);
  const auto n = numeric_gradient(fn, inputs, h);
  return CheckResult{std::move(name), relative_error(a, n), tolerance};
}

std::vector<CheckResult> check_primitives(Rng& rng, double tolerance) {
  std::vector<CheckResult> results;
  auto run = [&](const char* name, GraphFn fn, std::vector<Matrix> inputs) {
    results.push_back(check_gradient(name, fn, inputs, 1e-5, tolerance));
  };
  const Index r = 3;
  const Index c = 4;

  run("add", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, v[0] + v[1], 1); },
      {random_matrix(rng, r, c), random_matrix(rng, r, c)});
  run("subtract", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, v[0] - v[1], 2); },
      {random_matrix(rng, r, c), random_matrix(rng, r, c)});
  run("multiply", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, v[0] * v[1], 3); },
      {random_matrix(rng, r, c), random_matrix(rng, r, c)});
  run("divide", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, v[0] / v[1], 4); },
      {random_matrix(rng, r, c), random_matrix(rng, r, c, 0.5, 2.0)});
  run("matvec", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, matmul(v[0], v[1]), 5); },
      {random_matrix(rng, r, c), random_matrix(rng, c, 1)});
  run("matmul", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, matmul(v[0], v[1]), 6); },
      {random_matrix(rng, r, c), random_matrix(rng, c, 5)});
  run("exp", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, exp(v[0]), 7); },
      {random_matrix(rng, r, c)});
  run("log", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, log(v[0]), 8); },
      {random_matrix(rng, r, c, 0.2, 3.0)});
  run("square", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, square(v[0]), 9); },
      {random_matrix(rng, r, c)});
  run("sqrt", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, sqrt(v[0]), 10); },
      {random_matrix(rng, r, c, 0.2, 3.0)});
  run("sin", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, sin(v[0]), 11); },
      {random_matrix(rng, r, c, -3.0, 3.0)});
  run("cos", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, cos(v[0]), 12); },
      {random_matrix(rng, r, c, -3.0, 3.0)});
  run("negation", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, -v[0], 13); },
      {random_matrix(rng, r, c)});
  run("relu", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, relu(v[0]), 14); },
      {away_from_zero(rng, r, c, 0.01)});
  run("floor_abs",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, floor_abs(v[0], 0.005), 15); },
      {away_from_zero(rng, r, c, 0.01)});
  run("sum", [](Tape&, std::span<const Var> v) { return sum(v[0]); }, {random_matrix(rng, r, c)});
  run("col_sums", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, col_sums(v[0]), 16); },
      {random_matrix(rng, r, c)});
  run("row_sums", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, row_sums(v[0]), 17); },
      {random_matrix(rng, r, c)});
  run("repeat_rows",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, repeat_rows(v[0], 3), 18); },
      {random_matrix(rng, 1, c)});
  run("repeat_cols",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, repeat_cols(v[0], 3), 19); },
      {random_matrix(rng, r, 1)});
  run("concatenation",
      [](Tape& t, std::span<const Var> v) {
        const Var parts[] = {v[0], v[1], v[0]};
        return weighted_sum(t, concat_rows(parts), 20);
      },
      {random_matrix(rng, 2, c), random_matrix(rng, 3, c)});
  run("slice", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, slice_rows(v[0], 1, 2), 21); },
      {random_matrix(rng, r, c)});
  run("gather_rows",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, gather_rows(v[0], {2, 0, 2, 1, 2}), 22); },
      {random_matrix(rng, r, c)});
  run("gather_cols",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, gather_cols(v[0], {3, 3, 0, 1, 3}), 23); },
      {random_matrix(rng, r, c)});
  run("softmax", [](Tape& t, std::span<const Var> v) { return weighted_sum(t, softmax(v[0]), 24); },
      {random_matrix(rng, r, c, -2.0, 2.0)});
  run("logsumexp", [](Tape&, std::span<const Var> v) { return logsumexp(v[0]); },
      {random_matrix(rng, 6, 1, -3.0, 3.0)});
  run("col_logsumexp",
      [](Tape& t, std::span<const Var> v) { return weighted_sum(t, col_logsumexp(v[0]), 25); },
      {random_matrix(rng, r, c, -3.0, 3.0)});
  // Only the unfrozen factor contributes: d/dx [sg(x) * x] = sg(x), matched by
  // differencing x * x0 with x0 held at its base value.
  {
    const Matrix x0 = random_matrix(rng, r, c, 0.5, 2.0);
    GraphFn frozen = [x0](Tape& t, std::span<const Var> v) {
      return weighted_sum(t, mul(t.constant(x0), v[0]), 26);
    };
    GraphFn stopped = [](Tape& t, std::span<const Var> v) { return weighted_sum(t, mul(stop_gradient(v[0]), v[0]), 26); };
    const auto a = analytic_gradient(stopped, {x0});
    const auto n = numeric_gradient(frozen, {x0}, 1e-5);
    results.push_back(CheckResult{"stop_gradient", relative_error(a, n), tolerance});
  }
  return results;
}

GraphFn random_graph(std::uint64_t graph_seed, int depth) {
  return [graph_seed, depth](Tape&, std::span<const Var> leaves) -> Var {
    Rng rng{graph_seed};
    std::uniform_int_distribution<int> pick_op(0, 21);
    std::vector<Var> pool(leaves.begin(), leaves.end() - 1);
    const Var weight = leaves.back();  // cols x cols, for matmul
    auto pick = [&]() { return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]; };
    auto soft_positive = [&](Var x) { return shift(square(x), 1.0); };

    for (int step = 0; step < depth; ++step) {
      const Var a = pick();
      const Var b = pick();
      const Index rows = a.rows();
      const Index cols = a.cols();
      Var out;
      switch (pick_op(rng)) {
        case 0: out = a + b; break;
        case 1: out = a - b; break;
        case 2: out = a * b; break;
        case 3: out = a / soft_positive(b); break;
        case 4: out = -a; break;
        case 5: out = exp(scale(a, 0.3)); break;
        case 6: out = log(soft_positive(a)); break;
        case 7: out = square(a); break;
        case 8: out = sqrt(soft_positive(a)); break;
        case 9: out = sin(a); break;
        case 10: out = cos(a); break;
        case 11: out = relu(a); break;
        case 12: out = scale(matmul(a, weight), 0.5); break;
        case 13: out = softmax(a); break;
        case 14: out = repeat_rows(col_sums(a), rows); break;
        case 15: out = repeat_cols(row_sums(a), cols); break;
        case 16: {
          std::vector<Index> idx(static_cast<std::size_t>(cols));
          for (auto& i : idx) i = std::uniform_int_distribution<Index>(0, cols - 1)(rng);
          out = gather_cols(a, std::move(idx));
          break;
        }
        case 17: {
          std::vector<Index> idx(static_cast<std::size_t>(rows));
          for (auto& i : idx) i = std::uniform_int_distribution<Index>(0, rows - 1)(rng);
          out = gather_rows(a, std::move(idx));
          break;
        }
        case 18: {
          if (rows < 2) { out = a + b; break; }
          const Index cut = std::uniform_int_distribution<Index>(1, rows - 1)(rng);
          const Var parts[] = {slice_rows(b, cut, rows - cut), slice_rows(a, 0, cut)};
          out = concat_rows(parts);
          break;
        }
        case 19: out = repeat_rows(col_logsumexp(a), rows); break;
        case 20: out = shift(scale(a, 1.5), 0.25); break;
        default: out = repeat_rows(col_sums(a * b), rows); break;
      }
      pool.push_back(out);
    }
    const Var last = pool.back();
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
      case 0: return sum(last);
      case 1: return logsumexp(last);
      default: return sum(col_logsumexp(last));
    }
  };
}

std::vector<CheckResult> check_random_graphs(std::uint64_t seed, int count, Index max_dim, double tolerance) {
  std::vector<CheckResult> results;
  for (int g = 0; g < count; ++g) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(g)});
    const Index rows = std::uniform_int_distribution<Index>(1, max_dim)(rng);
    const Index cols = std::uniform_int_distribution<Index>(1, max_dim)(rng);
    const int leaves = std::uniform_int_distribution<int>(1, 3)(rng);
    const int depth = std::uniform_int_distribution<int>(3, 10)(rng);
    std::vector<Matrix> inputs;
    for (int l = 0; l < leaves; ++l) {
      inputs.push_back(away_from_zero(rng, rows, cols, 0.05));
    }
    inputs.push_back(random_matrix(rng, cols, cols));
    const GraphFn fn = random_graph(rng(), depth);
    results.push_back(check_gradient("composite_" + std::to_string(g), fn, inputs, 1e-5, tolerance));
  }
  return results;
}

}  // namespace statemix::ad
