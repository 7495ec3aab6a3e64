#include "statemix/neuralnet/adam.hpp"

#include <cmath>

namespace statemix::nn {

NonFiniteGradient::NonFiniteGradient(std::string parameter)
    : std::runtime_error("non-finite gradient for parameter " + parameter), parameter_(std::move(parameter)) {}

AdamState make_adam(const Network& net, AdamOptions options) {
  AdamState s{options, {}, {}, 0};
  for (const Matrix* p : net.parameters()) {
    s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(AdamState& state, const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               const std::vector<std::string>& names) {
  if (params.size() != grads.size() || params.size() != state.m.size() || names.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols() ||
        state.m[i].rows() != params[i]->rows() || state.m[i].cols() != params[i]->cols()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " + names[i]);
    }
    if (!grads[i].allFinite()) throw NonFiniteGradient(names[i]);
  }
  const auto& o = state.options;
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -=
        o.learning_rate * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + o.epsilon);
  }
}

void adam_step(AdamState& state, Network& net, const std::vector<Matrix>& grads) {
  adam_step(state, net.parameters(), grads, net.parameter_names());
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) g *= f;
  }
  return norm;
}

}  // namespace statemix::nn
