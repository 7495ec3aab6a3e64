#pragma once

#include <cstdint>

#include "statemix/autodiff/gradcheck.hpp"

namespace statemix::training {

/// Gradient of the summed log-weight objective of a T = 3, K = 4 differentiable filter with
/// two-layer transition and proposal networks on Lorenz 96 (d_x = 5), against central
/// differences under common random numbers.
ad::CheckResult check_filter_gradient(std::uint64_t seed, double tolerance = 1e-3);

/// Gradient of sum_k log of the resampling pre-weights at t = 2 (T = 2, K = 4) against central
/// differences of sum_k log wbar_1^(a_k) with the ancestors and all other randomness frozen.
ad::CheckResult check_resampling_gradient(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace statemix::training
