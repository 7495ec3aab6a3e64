#pragma once

#include <vector>

#include "statemix/autodiff/tape.hpp"

namespace statemix::bench {

/// (1 / (T d_x)) sum_t ||xhat_t - x_t||^2. With `periodic`, differences are wrapped into [-pi, pi).
double compute_mse(const ad::Matrix& estimates, const ad::Matrix& truth, bool periodic = false);

/// mse_method / mse_baseline.
double relative_improvement(double mse_method, double mse_baseline);

/// Linearly interpolated percentile of `values`, q in [0, 100].
double percentile(std::vector<double> values, double q);

double mean(const std::vector<double>& values);

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(int wins, int losses);

}  // namespace statemix::bench
