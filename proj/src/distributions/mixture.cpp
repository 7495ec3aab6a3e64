#include "statemix/distributions/mixture.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace statemix::dist {
namespace {

void check_point(const DiagGaussian& g, Var x) {
  if (g.mean.rows() != x.rows() || g.mean.cols() != x.cols() || g.scale.rows() != x.rows() ||
      g.scale.cols() != x.cols()) {
    throw std::invalid_argument("log_density: point and distribution dimensions differ");
  }
}

void check_mixture(const GaussianMixture& m) {
  if (m.components.empty()) {
    throw std::invalid_argument("mixture has no components");
  }
  for (const auto& c : m.components) {
    if (c.dim() != m.dim() || c.batch() != m.batch()) {
      throw std::invalid_argument("mixture components differ in shape");
    }
  }
}

void check_draws(const GaussianMixture& m, const MixtureDraws& d) {
  check_mixture(m);
  if (d.normals.rows() != m.dim() || d.normals.cols() != m.batch() || d.uniforms.rows() < 1 ||
      d.uniforms.cols() != m.batch()) {
    throw std::invalid_argument("mixture draws do not match the mixture shape");
  }
}

// Row-selection mask for component s, repeated over the d state rows.
Matrix component_mask(const std::vector<Index>& chosen, Index s, Index dim) {
  Matrix mask = Matrix::Zero(dim, static_cast<Index>(chosen.size()));
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    if (chosen[k] == s) mask.col(static_cast<Index>(k)).setOnes();
  }
  return mask;
}

}  // namespace

MixtureDraws draw_mixture_noise(Rng& rng, Index components, Index dim, Index batch) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  MixtureDraws d{Matrix(dim, batch), Matrix(components, batch)};
  for (Index k = 0; k < batch; ++k) {
    for (Index s = 0; s < components; ++s) {
      double u = uniform(rng);
      while (u <= 0.0) u = uniform(rng);
      d.uniforms(s, k) = u;
    }
    for (Index i = 0; i < dim; ++i) d.normals(i, k) = normal(rng);
  }
  return d;
}

Var effective_scale(Var raw_scale) { return ad::floor_abs(raw_scale, kScaleFloor); }

Var log_density(const DiagGaussian& g, Var x) {
  check_point(g, x);
  const Var c = effective_scale(g.scale);
  const Var z = (x - g.mean) / c;
  const double norm = -0.5 * static_cast<double>(g.dim()) * std::log(2.0 * std::numbers::pi);
  return ad::shift(ad::scale(ad::col_sums(ad::square(z)), -0.5) - ad::col_sums(ad::log(c)), norm);
}

Var log_density(const GaussianMixture& m, Var x) {
  check_mixture(m);
  if (m.size() == 1) {
    return log_density(m.components.front(), x);
  }
  std::vector<Var> rows;
  rows.reserve(m.components.size());
  for (const auto& c : m.components) {
    rows.push_back(log_density(c, x));
  }
  return ad::shift(ad::col_logsumexp(ad::concat_rows(rows)), -std::log(static_cast<double>(m.size())));
}

std::vector<Index> categorical_components(const MixtureDraws& draws, Index components) {
  std::vector<Index> chosen(static_cast<std::size_t>(draws.uniforms.cols()));
  for (Index k = 0; k < draws.uniforms.cols(); ++k) {
    const auto s = static_cast<Index>(draws.uniforms(0, k) * static_cast<double>(components));
    chosen[static_cast<std::size_t>(k)] = std::min(s, components - 1);
  }
  return chosen;
}

Var sample_stopgrad(const GaussianMixture& m, const MixtureDraws& draws) {
  check_draws(m, draws);
  ad::Tape& tape = m.components.front().mean.tape();
  const Var eps = tape.constant(draws.normals);
  if (m.size() == 1) {
    const auto& c = m.components.front();
    return c.mean + effective_scale(c.scale) * eps;
  }
  const auto chosen = categorical_components(draws, m.size());
  Var mean;
  Var scale;
  for (Index s = 0; s < m.size(); ++s) {
    const Var mask = tape.constant(component_mask(chosen, s, m.dim()));
    const auto& c = m.components[static_cast<std::size_t>(s)];
    const Var ms = mask * c.mean;
    const Var cs = mask * effective_scale(c.scale);
    mean = s == 0 ? ms : mean + ms;
    scale = s == 0 ? cs : scale + cs;
  }
  return mean + scale * eps;
}

Var sample_reparam(const GaussianMixture& m, const MixtureDraws& draws, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("Gumbel-softmax temperature must be positive");
  }
  check_draws(m, draws);
  if (draws.uniforms.rows() != m.size()) {
    throw std::invalid_argument("Gumbel-softmax needs one uniform per component");
  }
  ad::Tape& tape = m.components.front().mean.tape();
  const Index S = m.size();
  const Index K = m.batch();

  // Equal mixture weights: every logit is log(1/S).
  Matrix perturbed(S, K);
  for (Index k = 0; k < K; ++k) {
    for (Index s = 0; s < S; ++s) {
      perturbed(s, k) = (-std::log(static_cast<double>(S)) - std::log(-std::log(draws.uniforms(s, k)))) / temperature;
    }
  }
  Matrix hard = Matrix::Zero(S, K);
  for (Index k = 0; k < K; ++k) {
    Index best = 0;
    perturbed.col(k).maxCoeff(&best);
    hard(best, k) = 1.0;
  }
  const Var soft = ad::softmax(tape.constant(perturbed));
  const Var selection = tape.constant(hard) + (soft - ad::stop_gradient(soft));

  const Var eps = tape.constant(draws.normals);
  Var mean;
  Var scale;
  for (Index s = 0; s < S; ++s) {
    const auto& c = m.components[static_cast<std::size_t>(s)];
    const Var weight = ad::repeat_rows(ad::slice_rows(selection, s, 1), m.dim());
    const Var ms = weight * c.mean;
    const Var cs = weight * effective_scale(c.scale);
    mean = s == 0 ? ms : mean + ms;
    scale = s == 0 ? cs : scale + cs;
  }
  return mean + scale * eps;
}

Var sample(const GaussianMixture& m, const MixtureDraws& draws, Sampler sampler) {
  return sampler == Sampler::gumbel_softmax ? sample_reparam(m, draws) : sample_stopgrad(m, draws);
}

std::string to_string(Sampler s) { return s == Sampler::gumbel_softmax ? "gumbel_softmax" : "stop_gradient"; }

Sampler sampler_from_string(const std::string& s) {
  if (s == "stop_gradient") return Sampler::stop_gradient;
  if (s == "gumbel_softmax") return Sampler::gumbel_softmax;
  throw std::invalid_argument("unknown sampler: " + s);
}

}  // namespace statemix::dist
