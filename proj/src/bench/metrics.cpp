#include "statemix/bench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>

namespace statemix::bench {

double compute_mse(const ad::Matrix& estimates, const ad::Matrix& truth, bool periodic) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols()) {
    throw std::invalid_argument("estimates and truth differ in shape");
  }
  if (estimates.size() == 0) throw std::invalid_argument("empty series");
  ad::Matrix diff = estimates - truth;
  if (periodic) {
    constexpr double two_pi = 2 * std::numbers::pi;
    diff = diff.unaryExpr([](double d) { return d - two_pi * std::floor((d + std::numbers::pi) / two_pi); });
  }
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

double relative_improvement(double mse_method, double mse_baseline) {
  if (!(mse_baseline > 0.0)) throw std::invalid_argument("baseline MSE must be positive");
  return mse_method / mse_baseline;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  if (q < 0 || q > 100) throw std::invalid_argument("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sign_test_p(int wins, int losses) {
  if (wins < 0 || losses < 0) throw std::invalid_argument("negative counts");
  const int n = wins + losses;
  if (n == 0) return 1.0;
  if (wins == 0) return 1.0;
  const boost::math::binomial_distribution<double> b(n, 0.5);
  return boost::math::cdf(boost::math::complement(b, wins - 1));
}

}  // namespace statemix::bench
