#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "statemix/filter/kernel.hpp"

namespace statemix::filter {

using RowVector = Eigen::RowVectorXd;

/// Raised when the weights of a step collapse; `step` is the 1-based time index.
class DegeneracyError : public std::runtime_error {
 public:
  DegeneracyError(Index step, const std::string& what);
  Index step() const { return step_; }

 private:
  Index step_;
};

/// log of the smallest positive double; normalized log-weights below this underflow to zero.
inline constexpr double kLogUnderflow = -744.4400719213812;

struct FilterOptions {
  Index particles = 100;
  /// Stop-gradient resampling with score-carrying pre-weights.
  bool differentiable = false;
  /// Largest tolerated fraction of underflowing normalized weights; 1 disables the check.
  double max_underflow_fraction = 1.0;
  bool keep_ensembles = true;
};

struct Ensemble {
  Matrix particles;       // d x K
  RowVector log_weights;  // normalized, 1 x K
  std::vector<Index> ancestors;
};

struct FilterResult {
  std::vector<Ensemble> ensembles;  // one per observation when kept
  Matrix means;                     // d x T weighted particle means
  Vector ess;                       // T
  Vector step_loglik;               // T, log of the mean unnormalized weight
  Var objective;                    // sum_t sum_k log w_t^(k), 1 x 1; lives on the caller's tape
  double objective_value = 0.0;     // primal of objective
  double log_marginal = 0.0;        // sum of step_loglik

  Index length() const { return means.cols(); }
};

struct Resampled {
  std::vector<Index> ancestors;
  Var log_pre_weights;  // 1 x K, primal log(1/K)
};

/// Independent inverse-CDF categorical draws, one uniform per particle.
std::vector<Index> multinomial_ancestors(const RowVector& log_norm_weights, Rng& rng);

/// Ancestors from the frozen weights. When differentiable, log pre-weights are
/// log(1/K) + (log w_a - stop_gradient(log w_a)); otherwise the constant log(1/K).
Resampled resample_stopgrad(Var log_norm_weights, Rng& rng, bool differentiable);

struct StepOutput {
  Var particles;          // d x K
  Var log_weights;        // unnormalized log w, 1 x K
  Var log_norm_weights;   // 1 x K
  double log_mean_weight = 0.0;
  std::vector<Index> ancestors;
};

/// One SIR step at 1-based time `t`. A null `proposal` samples from `f` and uses log w = log g.
StepOutput sir_step(Var particles, Var log_norm_weights, const Vector& y, const Transition& f,
                    const Proposal* proposal, const Observation& g, Rng& rng, const FilterOptions& options,
                    Index t);

/// Runs T = observations.cols() steps from `initial_particles` (d x K) with uniform weights.
FilterResult run_filter(ad::Tape& tape, const Matrix& initial_particles, const Matrix& observations,
                        const Transition& f, const Proposal* proposal, const Observation& g, Rng& rng,
                        const FilterOptions& options);

/// Weighted mean sum_k w_k x_k.
Vector estimate_state(const Matrix& particles, const RowVector& log_norm_weights);

/// 1 / sum_k w_k^2.
double effective_sample_size(const RowVector& log_norm_weights);

/// CSV `t,mean_1..mean_dx,ess,step_loglik`.
void write_filter_csv(const std::filesystem::path& path, const FilterResult& result);

/// {loglik, log_marginal, mse_vs_truth (when truth given), config_hash, seed}.
nlohmann::json filter_summary(const FilterResult& result, const std::optional<Matrix>& truth,
                              std::uint64_t config_hash, std::uint64_t seed);

}  // namespace statemix::filter
