#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "statemix/bench/config.hpp"
#include "statemix/filter/particle_filter.hpp"

namespace statemix::bench {

/// Networks used by one filter. A null transition means the SSM's true kernel;
/// a null proposal means sampling from the transition (bootstrap weights).
struct FilterSetup {
  const nn::Network* transition = nullptr;
  const nn::Network* proposal = nullptr;
  Index transition_components = 1;
  Index proposal_components = 1;
  dist::Sampler sampler = dist::Sampler::stop_gradient;
};

/// Non-differentiable filter over `observations` with `particles` particles, drawing x_0 from the model prior.
filter::FilterResult run_setup(const FilterSetup& setup, const ssm::StateSpaceModel& model, const Matrix& observations,
                               Index particles, Rng& rng);

/// Runs fn(0..count-1) on up to `threads` workers; rethrows the first exception.
void parallel_for(Index count, int threads, const std::function<void(Index)>& fn);

struct MetricRow {
  std::string system;
  std::string swept_key;
  double swept_value = 0.0;
  Method method = Method::bpf;
  Index components = 0;
  Index run = 0;
  std::uint64_t series_hash = 0;
  double mse = 0.0;
  std::optional<double> ri_mse;  // empty when the baseline run failed
  double loglik = 0.0;
  double wall_ms = 0.0;
};

struct SummaryRow {
  std::string system;
  std::string swept_key;
  double swept_value = 0.0;
  Method method = Method::bpf;
  Index components = 0;
  std::optional<double> ri_mse_mean;
  std::optional<double> ri_mse_p2_5;
  std::optional<double> ri_mse_p97_5;
  Index n_runs = 0;
};

struct CellFailure {
  double swept_value = 0.0;
  Method method = Method::bpf;
  Index components = 0;
  std::optional<Index> run;  // empty for training failures
  std::string error;
};

struct SweepResult {
  std::vector<MetricRow> metrics;
  std::vector<SummaryRow> summary;
  std::vector<CellFailure> failures;
};

struct SweepOptions {
  int threads = 1;
  bool record_wall_time = false;
  /// Directory for per-cell training checkpoints and histories; empty to skip.
  std::filesystem::path model_dir;
  std::function<void(const std::string&)> log;
};

/// For each swept value: trains each learned method once on dedicated training series,
/// then evaluates every method and the BPF baseline on `runs` shared evaluation series.
SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

/// Recomputes per-(value, method, S) summaries from metric rows, in method order of `config`.
std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<MetricRow>& rows);

/// Seeds of the evaluation and training series of a cell.
std::uint64_t eval_series_seed(std::uint64_t seed, Index cell, Index run);
std::uint64_t train_series_seed(std::uint64_t seed, Index cell, Index index);

/// `system,swept_key,swept_value,method,S,run,series_hash,mse,ri_mse,loglik,wall_ms`
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
/// `system,swept_key,swept_value,method,S,ri_mse_mean,ri_mse_p2_5,ri_mse_p97_5,n_runs`
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace statemix::bench
