#include "statemix/neuralnet/network.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace statemix::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

std::vector<Index> Network::dims() const {
  std::vector<Index> d{input_dim()};
  for (const auto& l : layers) d.push_back(l.weight.rows());
  return d;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    names.push_back("A" + std::to_string(i + 1));
    names.push_back("b" + std::to_string(i + 1));
  }
  return names;
}

std::vector<Matrix*> Network::parameters() {
  std::vector<Matrix*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Matrix*> Network::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Network init_params(const std::vector<Index>& dims, const std::vector<Activation>& activations, Rng& rng) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw std::invalid_argument("init_params: need one activation per layer and at least one layer");
  }
  for (Index d : dims) {
    if (d <= 0) throw std::invalid_argument("init_params: layer dimensions must be positive");
  }
  Network net;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l - 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer;
    layer.weight.resize(dims[l], dims[l - 1]);
    layer.bias.resize(dims[l], 1);
    for (Index j = 0; j < layer.weight.cols(); ++j) {
      for (Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    }
    for (Index i = 0; i < layer.bias.rows(); ++i) layer.bias(i, 0) = u(rng);
    layer.activation = activations[l - 1];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Network init_mixture_network(Index input_dim, const std::vector<Index>& hidden, Index components, Index state_dim,
                             Rng& rng) {
  std::vector<Index> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2 * components * state_dim);
  std::vector<Activation> acts(hidden.size(), Activation::relu);
  acts.push_back(Activation::identity);
  return init_params(dims, acts, rng);
}

BoundNetwork bind(ad::Tape& tape, const Network& net, bool trainable) {
  BoundNetwork b{&net, {}};
  for (const Matrix* p : net.parameters()) {
    b.params.push_back(trainable ? tape.variable(*p) : tape.constant(*p));
  }
  return b;
}

Var forward(const BoundNetwork& b, Var input) {
  if (input.rows() != b.net->input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                                std::to_string(b.net->input_dim()));
  }
  Var z = input;
  const Index K = input.cols();
  for (std::size_t l = 0; l < b.net->layers.size(); ++l) {
    const Var affine = ad::matmul(b.params[2 * l], z) + ad::repeat_cols(b.params[2 * l + 1], K);
    z = b.net->layers[l].activation == Activation::relu ? ad::relu(affine) : affine;
  }
  return z;
}

dist::GaussianMixture make_mixture(Var output, Index components, Index state_dim) {
  if (components < 1 || output.rows() != 2 * components * state_dim) {
    throw std::invalid_argument("make_mixture: output length " + std::to_string(output.rows()) + " is not 2*" +
                                std::to_string(components) + "*" + std::to_string(state_dim));
  }
  dist::GaussianMixture m;
  for (Index s = 0; s < components; ++s) {
    m.components.push_back({ad::slice_rows(output, 2 * s * state_dim, state_dim),
                            ad::slice_rows(output, (2 * s + 1) * state_dim, state_dim)});
  }
  return m;
}

std::vector<Matrix> parameter_gradients(const ad::Gradients& grads, const BoundNetwork& net) {
  std::vector<Matrix> out;
  out.reserve(net.params.size());
  for (const Var& p : net.params) out.push_back(grads.wrt(p));
  return out;
}

std::uint64_t parameter_hash(const Network& net) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (const Matrix* p : net.parameters()) {
    mix(static_cast<std::uint64_t>(p->rows()));
    mix(static_cast<std::uint64_t>(p->cols()));
    for (Index i = 0; i < p->size(); ++i) mix(std::bit_cast<std::uint64_t>(p->data()[i]));
  }
  return h;
}

}  // namespace statemix::nn
