#include "statemix/training/kernels.hpp"

#include <stdexcept>

namespace statemix::training {

NetworkTransition::NetworkTransition(nn::BoundNetwork net, Index components, Index state_dim, dist::Sampler sampler)
    : net_(std::move(net)), components_(components), state_dim_(state_dim), sampler_(sampler) {
  if (net_.net->input_dim() != state_dim_) {
    throw std::invalid_argument("transition network input must be the state dimension");
  }
}

std::unique_ptr<filter::Kernel> NetworkTransition::at(Var x_prev) const {
  const Var out = nn::forward(net_, x_prev);
  return std::make_unique<filter::MixtureKernel>(nn::make_mixture(out, components_, state_dim_), sampler_);
}

NetworkProposal::NetworkProposal(nn::BoundNetwork net, Index components, Index state_dim, dist::Sampler sampler)
    : net_(std::move(net)), components_(components), state_dim_(state_dim), sampler_(sampler) {
  if (net_.net->input_dim() <= state_dim_) {
    throw std::invalid_argument("proposal network input must hold the state and the observation");
  }
}

std::unique_ptr<filter::Kernel> NetworkProposal::at(Var x_prev, const Vector& y) const {
  if (x_prev.rows() + y.size() != net_.net->input_dim()) {
    throw std::invalid_argument("proposal network input must be d_x + d_y");
  }
  ad::Tape& tape = x_prev.tape();
  const Var obs = tape.constant(y.replicate(1, x_prev.cols()));
  const std::vector<Var> parts{x_prev, obs};
  const Var out = nn::forward(net_, ad::concat_rows(parts));
  return std::make_unique<filter::MixtureKernel>(nn::make_mixture(out, components_, state_dim_), sampler_);
}

}  // namespace statemix::training
