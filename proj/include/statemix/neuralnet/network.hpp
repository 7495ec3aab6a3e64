#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statemix/autodiff/tape.hpp"
#include "statemix/common/rng.hpp"
#include "statemix/distributions/mixture.hpp"

namespace statemix::nn {

using ad::Index;
using ad::Matrix;
using ad::Var;

enum class Activation { identity, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Matrix weight;  // d_l x d_{l-1}
  Matrix bias;    // d_l x 1
  Activation activation = Activation::identity;
};

/// Dense feed-forward network z_l = rho_l(A_l z_{l-1} + b_l).
struct Network {
  std::vector<Layer> layers;

  Index input_dim() const { return layers.front().weight.cols(); }
  Index output_dim() const { return layers.back().weight.rows(); }
  std::vector<Index> dims() const;
  std::size_t parameter_count() const;
  /// Names in parameter order: A1, b1, A2, b2, ...
  std::vector<std::string> parameter_names() const;
  /// Pointers to every parameter matrix in the order of `parameter_names`.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

/// Uniform(-1/sqrt(d_{l-1}), 1/sqrt(d_{l-1})) on every weight and bias entry.
Network init_params(const std::vector<Index>& dims, const std::vector<Activation>& activations, Rng& rng);

/// Mixture network: relu hidden layers, identity output of width 2 * components * state_dim.
Network init_mixture_network(Index input_dim, const std::vector<Index>& hidden, Index components, Index state_dim,
                             Rng& rng);

/// A network's parameters placed on a tape.
struct BoundNetwork {
  const Network* net = nullptr;
  std::vector<Var> params;  // same order as Network::parameters
};

/// Trainable parameters become tape variables; otherwise constants.
BoundNetwork bind(ad::Tape& tape, const Network& net, bool trainable);

/// Batched forward pass; `input` is d_0 x K and the result is d_L x K.
Var forward(const BoundNetwork& net, Var input);

/// Slices a (2 * S * d_x) x K output into S components of alternating (mean, scale) blocks.
dist::GaussianMixture make_mixture(Var output, Index components, Index state_dim);

/// Gradients for every parameter of `net`, in parameter order.
std::vector<Matrix> parameter_gradients(const ad::Gradients& grads, const BoundNetwork& net);

/// FNV-1a over the raw parameter bytes.
std::uint64_t parameter_hash(const Network& net);

}  // namespace statemix::nn
