#pragma once

#include <memory>

#include <Eigen/Dense>

#include "statemix/autodiff/tape.hpp"
#include "statemix/common/rng.hpp"
#include "statemix/distributions/mixture.hpp"

namespace statemix::filter {

using ad::Index;
using ad::Matrix;
using ad::Var;
using Vector = Eigen::VectorXd;

/// K conditional distributions, one per particle column.
class Kernel {
 public:
  virtual ~Kernel() = default;
  /// d x K draw; consumes `rng` in a fixed order.
  virtual Var sample(Rng& rng) const = 0;
  /// 1 x K log-densities of the columns of `x`.
  virtual Var log_density(Var x) const = 0;
};

/// Equal-weight Gaussian mixture per column; S = 1 gives a plain Gaussian.
class MixtureKernel : public Kernel {
 public:
  MixtureKernel(dist::GaussianMixture mixture, dist::Sampler sampler)
      : mixture_(std::move(mixture)), sampler_(sampler) {}

  Var sample(Rng& rng) const override;
  Var log_density(Var x) const override;
  const dist::GaussianMixture& mixture() const { return mixture_; }

 private:
  dist::GaussianMixture mixture_;
  dist::Sampler sampler_;
};

/// f(x_t | x_{t-1}).
class Transition {
 public:
  virtual ~Transition() = default;
  virtual std::unique_ptr<Kernel> at(Var x_prev) const = 0;
};

/// pi(x_t | x_{t-1}, y_t).
class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual std::unique_ptr<Kernel> at(Var x_prev, const Vector& y) const = 0;
};

/// g(y_t | x_t).
class Observation {
 public:
  virtual ~Observation() = default;
  /// 1 x K log-likelihoods of `y` under each particle column of `x`.
  virtual Var log_density(Var x, const Vector& y) const = 0;
};

/// y = x + noise with independent Gaussian noise of the given standard deviations.
class GaussianObservation : public Observation {
 public:
  explicit GaussianObservation(Vector stddev) : stddev_(std::move(stddev)) {}
  Var log_density(Var x, const Vector& y) const override;
  const Vector& stddev() const { return stddev_; }

 private:
  Vector stddev_;
};

/// Uses a transition kernel as the proposal.
class TransitionAsProposal : public Proposal {
 public:
  explicit TransitionAsProposal(const Transition& f) : f_(f) {}
  std::unique_ptr<Kernel> at(Var x_prev, const Vector&) const override { return f_.at(x_prev); }

 private:
  const Transition& f_;
};

}  // namespace statemix::filter
