#pragma once

#include <string>
#include <vector>

#include "statemix/autodiff/tape.hpp"
#include "statemix/common/rng.hpp"

namespace statemix::dist {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// Smallest effective standard deviation; raw scales are mapped to max(|c|, floor).
inline constexpr double kScaleFloor = 1e-3;
inline constexpr double kGumbelTemperature = 0.5;

/// A batch of independent diagonal Gaussians, one per column. `scale` holds the
/// raw covariance-scale vector c, so that C = diag(c)^2; both are d x K.
struct DiagGaussian {
  Var mean;
  Var scale;

  Index dim() const { return mean.rows(); }
  Index batch() const { return mean.cols(); }
};

/// Equally weighted mixture; every component has weight 1/S by construction.
struct GaussianMixture {
  std::vector<DiagGaussian> components;

  Index size() const { return static_cast<Index>(components.size()); }
  Index dim() const { return components.front().dim(); }
  Index batch() const { return components.front().batch(); }
};

enum class Sampler { stop_gradient, gumbel_softmax };

/// Externally supplied randomness for one batched mixture draw.
struct MixtureDraws {
  Matrix normals;   // d x K standard normals
  Matrix uniforms;  // S x K, in (0, 1)
};

MixtureDraws draw_mixture_noise(Rng& rng, Index components, Index dim, Index batch);

/// max(|c|, kScaleFloor), elementwise.
Var effective_scale(Var raw_scale);

/// Column-wise log N(x; mean, diag(c)^2), 1 x K.
Var log_density(const DiagGaussian& g, Var x);

/// Column-wise log of (1/S) sum_s N_s(x), 1 x K.
Var log_density(const GaussianMixture& m, Var x);

/// Component index per column from a plain categorical draw on the first row of `uniforms`.
std::vector<Index> categorical_components(const MixtureDraws& draws, Index components);

/// Straight-through Gumbel-softmax selection: the forward pass picks the
/// argmax component, gradients flow through the tempered softmax.
Var sample_reparam(const GaussianMixture& m, const MixtureDraws& draws, double temperature = kGumbelTemperature);

/// Component chosen by a categorical draw treated as a constant; the location-scale
/// transform of the chosen component stays differentiable.
Var sample_stopgrad(const GaussianMixture& m, const MixtureDraws& draws);

Var sample(const GaussianMixture& m, const MixtureDraws& draws, Sampler sampler);

std::string to_string(Sampler s);
Sampler sampler_from_string(const std::string& s);

}  // namespace statemix::dist
