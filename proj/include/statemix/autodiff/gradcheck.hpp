#pragma once

#include <functional>
#include <string>
#include <vector>

#include "statemix/autodiff/tape.hpp"
#include "statemix/common/rng.hpp"

namespace statemix::ad {

/// Builds a scalar expression from leaf Vars on the given tape.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Evaluates `fn` at `inputs` and returns the scalar primal.
double evaluate(const GraphFn& fn, const std::vector<Matrix>& inputs);

/// Reverse-mode gradient of `fn` with respect to every input.
std::vector<Matrix> analytic_gradient(const GraphFn& fn, const std::vector<Matrix>& inputs);

/// Central differences with step `h` on every input entry.
std::vector<Matrix> numeric_gradient(const GraphFn& fn, const std::vector<Matrix>& inputs, double h);

/// max |a - n| / max(max |n|, max |a|, 1e-3) over all entries of all inputs.
double relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric);

/// Compares reverse-mode and central-difference gradients.
CheckResult check_gradient(std::string name, const GraphFn& fn, const std::vector<Matrix>& inputs,
                           double h = 1e-5, double tolerance = 1e-5);

/// One finite-difference check per supported primitive.
std::vector<CheckResult> check_primitives(Rng& rng, double tolerance = 1e-5);

/// A random composite expression. All leaves but the last share one shape
/// rows x cols; the last is a cols x cols matrix used by matmul steps. The
/// structure is a pure function of `graph_seed`.
GraphFn random_graph(std::uint64_t graph_seed, int depth);

/// `count` random composite graphs, dims <= max_dim, checked against central differences.
std::vector<CheckResult> check_random_graphs(std::uint64_t seed, int count, Index max_dim = 8,
                                             double tolerance = 1e-5);

}  // namespace statemix::ad
