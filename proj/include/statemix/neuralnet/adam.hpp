#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "statemix/neuralnet/network.hpp"

namespace statemix::nn {

struct AdamOptions {
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

/// Raised when a gradient entry is NaN or infinite.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string parameter);
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

AdamState make_adam(const Network& net, AdamOptions options = {});

/// One bias-corrected ADAM descent step: theta -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, Network& net, const std::vector<Matrix>& grads);

/// Same update on a plain list of parameters with the given names.
void adam_step(AdamState& state, const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
               const std::vector<std::string>& names);

/// Rescales `grads` in place so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

}  // namespace statemix::nn
