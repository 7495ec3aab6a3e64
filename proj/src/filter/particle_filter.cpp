#include "statemix/filter/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "statemix/common/format.hpp"

namespace statemix::filter {

DegeneracyError::DegeneracyError(Index step, const std::string& what)
    : std::runtime_error("filter degeneracy at t=" + std::to_string(step) + ": " + what), step_(step) {}

std::vector<Index> multinomial_ancestors(const RowVector& log_norm_weights, Rng& rng) {
  const Index K = log_norm_weights.size();
  if (!log_norm_weights.array().isFinite().any() || log_norm_weights.array().isNaN().any()) {
    throw std::invalid_argument("resampling needs finite weights");
  }
  const double top = log_norm_weights.maxCoeff();
  std::vector<double> cdf(static_cast<std::size_t>(K));
  double acc = 0.0;
  Index last_positive = 0;
  for (Index k = 0; k < K; ++k) {
    const double w = std::exp(log_norm_weights(k) - top);
    if (w > 0.0) last_positive = k;
    acc += w;
    cdf[static_cast<std::size_t>(k)] = acc;
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Index> ancestors(static_cast<std::size_t>(K));
  for (auto& a : ancestors) {
    const double u = uniform(rng) * acc;
    const auto idx = static_cast<Index>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    a = std::min(idx, last_positive);
  }
  return ancestors;
}

Resampled resample_stopgrad(Var log_norm_weights, Rng& rng, bool differentiable) {
  const Index K = log_norm_weights.cols();
  ad::Tape& tape = log_norm_weights.tape();
  Resampled r{multinomial_ancestors(log_norm_weights.value().row(0), rng), {}};
  const double log_uniform = -std::log(static_cast<double>(K));
  if (differentiable) {
    const Var selected = ad::gather_cols(log_norm_weights, r.ancestors);
    r.log_pre_weights = ad::shift(selected - ad::stop_gradient(selected), log_uniform);
  } else {
    r.log_pre_weights = tape.constant(RowVector::Constant(K, log_uniform));
  }
  return r;
}

StepOutput sir_step(Var particles, Var log_norm_weights, const Vector& y, const Transition& f,
                    const Proposal* proposal, const Observation& g, Rng& rng, const FilterOptions& options,
                    Index t) {
  const Index K = particles.cols();
  Resampled r = resample_stopgrad(log_norm_weights, rng, options.differentiable);
  const Var parents = ad::gather_cols(particles, r.ancestors);

  StepOutput out;
  Var log_w;
  if (proposal == nullptr) {
    const auto kernel = f.at(parents);
    out.particles = kernel->sample(rng);
    log_w = g.log_density(out.particles, y);
  } else {
    const auto pi = proposal->at(parents, y);
    out.particles = pi->sample(rng);
    const auto fk = f.at(parents);
    log_w = g.log_density(out.particles, y) + fk->log_density(out.particles) - pi->log_density(out.particles);
  }
  out.log_weights = log_w;

  const auto& lw = log_w.value();
  if (lw.array().isNaN().any()) throw DegeneracyError(t, "NaN log-weight");
  if ((lw.array() == std::numeric_limits<double>::infinity()).any()) {
    throw DegeneracyError(t, "infinite log-weight");
  }
  if (!lw.array().isFinite().any()) throw DegeneracyError(t, "all log-weights are -inf");

  const Var log_p = r.log_pre_weights + log_w;
  const Var lse = ad::logsumexp(log_p);
  out.log_norm_weights = log_p - ad::repeat_cols(lse, K);
  out.log_mean_weight = lse.scalar();
  out.ancestors = std::move(r.ancestors);

  if (options.max_underflow_fraction < 1.0) {
    const auto under = (out.log_norm_weights.value().array() < kLogUnderflow).count();
    if (static_cast<double>(under) > options.max_underflow_fraction * static_cast<double>(K)) {
      throw DegeneracyError(t, std::to_string(under) + " of " + std::to_string(K) + " weights underflow");
    }
  }
  return out;
}

FilterResult run_filter(ad::Tape& tape, const Matrix& initial_particles, const Matrix& observations,
                        const Transition& f, const Proposal* proposal, const Observation& g, Rng& rng,
                        const FilterOptions& options) {
  const Index T = observations.cols();
  const Index K = initial_particles.cols();
  const Index d = initial_particles.rows();
  if (T < 1) throw std::invalid_argument("run_filter: need at least one observation");
  if (K < 1) throw std::invalid_argument("run_filter: need at least one particle");

  FilterResult res;
  res.means.resize(d, T);
  res.ess.resize(T);
  res.step_loglik.resize(T);
  Var particles = tape.constant(initial_particles);
  Var log_norm = tape.constant(RowVector::Constant(K, -std::log(static_cast<double>(K))));
  Var objective;
  for (Index t = 1; t <= T; ++t) {
    const Vector y = observations.col(t - 1);
    StepOutput s = sir_step(particles, log_norm, y, f, proposal, g, rng, options, t);
    const Var step_sum = ad::sum(s.log_weights);
    objective = t == 1 ? step_sum : objective + step_sum;
    const RowVector lnw = s.log_norm_weights.value().row(0);
    res.means.col(t - 1) = estimate_state(s.particles.value(), lnw);
    res.ess(t - 1) = effective_sample_size(lnw);
    res.step_loglik(t - 1) = s.log_mean_weight;
    if (options.keep_ensembles) {
      res.ensembles.push_back({s.particles.value(), lnw, std::move(s.ancestors)});
    }
    particles = s.particles;
    log_norm = s.log_norm_weights;
  }
  res.objective = objective;
  res.objective_value = objective.scalar();
  res.log_marginal = res.step_loglik.sum();
  return res;
}

Vector estimate_state(const Matrix& particles, const RowVector& log_norm_weights) {
  return particles * log_norm_weights.array().exp().matrix().transpose();
}

double effective_sample_size(const RowVector& log_norm_weights) {
  return 1.0 / (2.0 * log_norm_weights.array()).exp().sum();
}

void write_filter_csv(const std::filesystem::path& path, const FilterResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t";
  for (Index i = 1; i <= result.means.rows(); ++i) out << ",mean_" << i;
  out << ",ess,step_loglik\n";
  for (Index t = 0; t < result.length(); ++t) {
    out << t + 1;
    for (Index i = 0; i < result.means.rows(); ++i) out << ',' << format_double(result.means(i, t));
    out << ',' << format_double(result.ess(t)) << ',' << format_double(result.step_loglik(t)) << '\n';
  }
}

nlohmann::json filter_summary(const FilterResult& result, const std::optional<Matrix>& truth,
                              std::uint64_t config_hash, std::uint64_t seed) {
  nlohmann::json j = {{"loglik", result.objective_value},
                      {"log_marginal", result.log_marginal},
                      {"config_hash", config_hash},
                      {"seed", seed}};
  if (truth) {
    if (truth->rows() != result.means.rows() || truth->cols() != result.means.cols()) {
      throw std::invalid_argument("filter_summary: truth shape does not match the estimates");
    }
    j["mse_vs_truth"] = (result.means - *truth).squaredNorm() / static_cast<double>(truth->size());
  }
  return j;
}

}  // namespace statemix::filter
