#include "statemix/filter/kernel.hpp"

#include <stdexcept>

namespace statemix::filter {

Var MixtureKernel::sample(Rng& rng) const {
  const auto draws = dist::draw_mixture_noise(rng, mixture_.size(), mixture_.dim(), mixture_.batch());
  return dist::sample(mixture_, draws, sampler_);
}

Var MixtureKernel::log_density(Var x) const { return dist::log_density(mixture_, x); }

Var GaussianObservation::log_density(Var x, const Vector& y) const {
  if (y.size() != x.rows() || stddev_.size() != x.rows()) {
    throw std::invalid_argument("observation dimension does not match the state");
  }
  ad::Tape& tape = x.tape();
  const Index K = x.cols();
  const Var scale = tape.constant(stddev_.replicate(1, K));
  return dist::log_density(dist::DiagGaussian{x, scale}, tape.constant(y.replicate(1, K)));
}

}  // namespace statemix::filter
