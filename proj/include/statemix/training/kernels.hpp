#pragma once

#include "statemix/filter/kernel.hpp"
#include "statemix/neuralnet/network.hpp"

namespace statemix::training {

using ad::Index;
using ad::Matrix;
using ad::Var;
using filter::Vector;

/// f(x_t | x_{t-1}) = GM(NN(x_{t-1})).
class NetworkTransition : public filter::Transition {
 public:
  NetworkTransition(nn::BoundNetwork net, Index components, Index state_dim, dist::Sampler sampler);
  std::unique_ptr<filter::Kernel> at(Var x_prev) const override;

 private:
  nn::BoundNetwork net_;
  Index components_;
  Index state_dim_;
  dist::Sampler sampler_;
};

/// pi(x_t | x_{t-1}, y_t) = GM(NN([x_{t-1}; y_t])).
class NetworkProposal : public filter::Proposal {
 public:
  NetworkProposal(nn::BoundNetwork net, Index components, Index state_dim, dist::Sampler sampler);
  std::unique_ptr<filter::Kernel> at(Var x_prev, const Vector& y) const override;

 private:
  nn::BoundNetwork net_;
  Index components_;
  Index state_dim_;
  dist::Sampler sampler_;
};

}  // namespace statemix::training
