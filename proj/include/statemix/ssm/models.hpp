#pragma once

#include <cmath>
#include <memory>
#include <string>

#include <json.hpp>

#include "statemix/filter/kernel.hpp"

namespace statemix::ssm {

using ad::Index;
using ad::Matrix;
using ad::Var;
using filter::Vector;

struct OrderParams {
  double R = 0.0;
  double phi = 0.0;
};

/// One Euler-Maruyama step x + dt * drift(x) + sqrt(dt) * v, cyclic indices. Needs x.size() >= 4.
Vector lorenz96_step(const Vector& x, double forcing, double dt, const Vector& v);

/// Classical fourth-order Runge-Kutta step of the noiseless Lorenz 96 drift.
Vector lorenz96_rk4(const Vector& x, double forcing, double dt);

/// R exp(i phi) = mean_j exp(i theta_j); phi = 0 when R = 0.
OrderParams kuramoto_order_params(const Vector& theta);

/// One Euler-Maruyama step x + dt * (omega + C R sin(phi - x)) + sqrt(dt) * v, without wrapping.
Vector kuramoto_step(const Vector& x, const Vector& omega, double coupling, double dt, const Vector& v);

/// Maps every entry into [-pi, pi).
Vector wrap_phase(const Vector& x);
Matrix wrap_phase(const Matrix& x);

/// Batched drift for d x K particle matrices.
Var lorenz96_drift(Var x, double forcing);
Var lorenz96_rk4(Var x, double forcing, double dt);
Var kuramoto_drift(Var x, const Vector& omega, double coupling);

/// A state-space model with additive Gaussian noise and identity observation:
/// x_t = m(x_{t-1}) + transition noise, y_t = x_t + observation noise.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::string name() const = 0;
  virtual Index state_dim() const = 0;
  Index obs_dim() const { return state_dim(); }

  /// Deterministic part of the transition for a single state.
  virtual Vector transition_mean(const Vector& x) const = 0;
  /// Same, batched on a tape.
  virtual Var transition_mean(Var x) const = 0;
  virtual Vector transition_stddev() const = 0;
  virtual Vector observation_stddev() const = 0;

  /// Applied to every sampled state (phase wrapping for Kuramoto).
  virtual Vector project(const Vector& x) const { return x; }
  virtual bool periodic() const { return false; }

  /// Initial state of a simulated trajectory (including any burn-in).
  virtual Vector simulation_start(Rng& rng) const = 0;
  /// Filter prior p(x_0), d x K.
  virtual Matrix initial_particles(Rng& rng, Index count) const = 0;

  /// x_t given x_{t-1} and a standard normal draw.
  Vector transition_sample(const Vector& x, const Vector& normal) const;
  /// log f(x_t | x_{t-1}) for single states.
  double transition_logpdf(const Vector& x, const Vector& x_prev) const;
  double observation_logpdf(const Vector& y, const Vector& x) const;

  std::unique_ptr<filter::Transition> transition() const;
  std::unique_ptr<filter::Observation> observation() const;

  virtual nlohmann::json describe() const = 0;
};

/// How the deterministic part of a Lorenz 96 transition is advanced over one dt.
enum class Integrator { rk4, euler };

std::string to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

struct Lorenz96Config {
  Index dim = 20;
  double forcing = 8.0;
  double dt = 0.05;
  double sigma_v = 0.5;             // Sigma_v = 0.25 I
  double sigma_r = std::sqrt(0.1);  // Sigma_r = 0.1 I
  Integrator integrator = Integrator::rk4;
};

class Lorenz96 : public StateSpaceModel {
 public:
  explicit Lorenz96(Lorenz96Config c);
  std::string name() const override { return "lorenz96"; }
  Index state_dim() const override { return c_.dim; }
  Vector transition_mean(const Vector& x) const override;
  Var transition_mean(Var x) const override;
  Vector transition_stddev() const override;
  Vector observation_stddev() const override;
  Vector simulation_start(Rng& rng) const override;
  Matrix initial_particles(Rng& rng, Index count) const override;
  nlohmann::json describe() const override;
  const Lorenz96Config& config() const { return c_; }

 private:
  Lorenz96Config c_;
};

struct KuramotoConfig {
  Index dim = 20;
  double coupling = 0.8;
  double dt = 0.05;
  double sigma_v = 0.1;
  double sigma_r = 0.005;
  double omega_mean = 0.5;
  double omega_std = 0.5;
  int burn_in = 200;
};

class Kuramoto : public StateSpaceModel {
 public:
  /// Natural frequencies are drawn once from `model_seed`.
  Kuramoto(KuramotoConfig c, std::uint64_t model_seed);
  Kuramoto(KuramotoConfig c, Vector omega);
  std::string name() const override { return "kuramoto"; }
  Index state_dim() const override { return c_.dim; }
  Vector transition_mean(const Vector& x) const override;
  Var transition_mean(Var x) const override;
  Vector transition_stddev() const override;
  Vector observation_stddev() const override;
  Vector project(const Vector& x) const override { return wrap_phase(x); }
  bool periodic() const override { return true; }
  Vector simulation_start(Rng& rng) const override;
  Matrix initial_particles(Rng& rng, Index count) const override;
  nlohmann::json describe() const override;
  const Vector& omega() const { return omega_; }
  const KuramotoConfig& config() const { return c_; }

 private:
  KuramotoConfig c_;
  Vector omega_;
};

/// x_t = a x_{t-1} + N(0, q), y_t = x_t + N(0, r), x_0 ~ N(m0, p0); one-dimensional.
struct LinearGaussianConfig {
  double a = 0.9;
  double q = 0.5;
  double r = 0.5;
  double m0 = 0.0;
  double p0 = 1.0;
};

class LinearGaussian : public StateSpaceModel {
 public:
  explicit LinearGaussian(LinearGaussianConfig c) : c_(c) {}
  std::string name() const override { return "linear_gaussian"; }
  Index state_dim() const override { return 1; }
  Vector transition_mean(const Vector& x) const override { return c_.a * x; }
  Var transition_mean(Var x) const override { return ad::scale(x, c_.a); }
  Vector transition_stddev() const override;
  Vector observation_stddev() const override;
  Vector simulation_start(Rng& rng) const override;
  Matrix initial_particles(Rng& rng, Index count) const override;
  nlohmann::json describe() const override;
  const LinearGaussianConfig& config() const { return c_; }

 private:
  LinearGaussianConfig c_;
};

struct KalmanResult {
  Vector mean;      // filtering means, one per observation
  Vector variance;  // filtering variances
};

/// Exact filtering moments for LinearGaussian.
KalmanResult kalman_filter(const LinearGaussianConfig& c, const Vector& y);

}  // namespace statemix::ssm
