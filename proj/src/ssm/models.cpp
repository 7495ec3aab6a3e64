#include "statemix/ssm/models.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace statemix::ssm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double v) { return v - kTwoPi * std::floor((v + std::numbers::pi) / kTwoPi); }

std::vector<Index> cyclic_shift(Index d, Index offset) {
  std::vector<Index> idx(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = ((i + offset) % d + d) % d;
  return idx;
}

Vector standard_normal(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

class TrueKernel : public filter::Kernel {
 public:
  TrueKernel(Var mean, Var scale, bool periodic) : mean_(mean), scale_(scale), periodic_(periodic) {}

  Var sample(Rng& rng) const override {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix eps(mean_.rows(), mean_.cols());
    for (Index k = 0; k < eps.cols(); ++k) {
      for (Index i = 0; i < eps.rows(); ++i) eps(i, k) = normal(rng);
    }
    ad::Tape& tape = mean_.tape();
    const Var x = mean_ + scale_ * tape.constant(eps);
    if (!periodic_) return x;
    return x + tape.constant(wrap_phase(x.value()) - x.value());
  }

  Var log_density(Var x) const override {
    if (!periodic_) return dist::log_density(dist::DiagGaussian{mean_, scale_}, x);
    // Nearest periodic image of the mean.
    const Matrix shift =
        kTwoPi * ((x.value() - mean_.value()).array() / kTwoPi).round().matrix();
    const Var mean = mean_ + x.tape().constant(shift);
    return dist::log_density(dist::DiagGaussian{mean, scale_}, x);
  }

 private:
  Var mean_;
  Var scale_;
  bool periodic_;
};

class TrueTransition : public filter::Transition {
 public:
  explicit TrueTransition(const StateSpaceModel& m) : m_(m), stddev_(m.transition_stddev()) {}

  std::unique_ptr<filter::Kernel> at(Var x_prev) const override {
    if (x_prev.rows() != m_.state_dim()) {
      throw std::invalid_argument("transition: particle dimension does not match the model");
    }
    const Var scale = x_prev.tape().constant(stddev_.replicate(1, x_prev.cols()));
    return std::make_unique<TrueKernel>(m_.transition_mean(x_prev), scale, m_.periodic());
  }

 private:
  const StateSpaceModel& m_;
  Vector stddev_;
};

}  // namespace

Vector lorenz96_step(const Vector& x, double forcing, double dt, const Vector& v) {
  const Index d = x.size();
  if (d < 4) throw std::invalid_argument("Lorenz 96 needs at least 4 state dimensions");
  if (v.size() != d) throw std::invalid_argument("Lorenz 96 noise dimension mismatch");
  Vector out(d);
  for (Index i = 0; i < d; ++i) {
    const double xm1 = x((i - 1 + d) % d);
    const double xm2 = x((i - 2 + d) % d);
    const double xp1 = x((i + 1) % d);
    out(i) = x(i) + dt * (xm1 * (xp1 - xm2) - x(i) + forcing) + std::sqrt(dt) * v(i);
  }
  return out;
}

Vector lorenz96_rk4(const Vector& x, double forcing, double dt) {
  const Index d = x.size();
  if (d < 4) throw std::invalid_argument("Lorenz 96 needs at least 4 state dimensions");
  auto f = [&](const Vector& z) {
    Vector out(d);
    for (Index i = 0; i < d; ++i) {
      out(i) = z((i - 1 + d) % d) * (z((i + 1) % d) - z((i - 2 + d) % d)) - z(i) + forcing;
    }
    return out;
  };
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

OrderParams kuramoto_order_params(const Vector& theta) {
  if (theta.size() == 0) return {};
  std::complex<double> z{0.0, 0.0};
  for (Index j = 0; j < theta.size(); ++j) z += std::polar(1.0, theta(j));
  z /= static_cast<double>(theta.size());
  const double R = std::abs(z);
  return {R, R == 0.0 ? 0.0 : std::arg(z)};
}

Vector kuramoto_step(const Vector& x, const Vector& omega, double coupling, double dt, const Vector& v) {
  if (omega.size() != x.size() || v.size() != x.size()) {
    throw std::invalid_argument("Kuramoto dimension mismatch");
  }
  const OrderParams op = kuramoto_order_params(x);
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    out(i) = x(i) + dt * (omega(i) + coupling * op.R * std::sin(op.phi - x(i))) + std::sqrt(dt) * v(i);
  }
  return out;
}

Vector wrap_phase(const Vector& x) { return x.unaryExpr(&wrap); }

Matrix wrap_phase(const Matrix& x) { return x.unaryExpr(&wrap); }

Var lorenz96_drift(Var x, double forcing) {
  const Index d = x.rows();
  if (d < 4) throw std::invalid_argument("Lorenz 96 needs at least 4 state dimensions");
  const Var xm1 = ad::gather_rows(x, cyclic_shift(d, -1));
  const Var xm2 = ad::gather_rows(x, cyclic_shift(d, -2));
  const Var xp1 = ad::gather_rows(x, cyclic_shift(d, 1));
  return ad::shift(xm1 * (xp1 - xm2) - x, forcing);
}

Var lorenz96_rk4(Var x, double forcing, double dt) {
  const Var k1 = lorenz96_drift(x, forcing);
  const Var k2 = lorenz96_drift(x + ad::scale(k1, 0.5 * dt), forcing);
  const Var k3 = lorenz96_drift(x + ad::scale(k2, 0.5 * dt), forcing);
  const Var k4 = lorenz96_drift(x + ad::scale(k3, dt), forcing);
  return x + ad::scale(k1 + ad::scale(k2, 2.0) + ad::scale(k3, 2.0) + k4, dt / 6.0);
}

Var kuramoto_drift(Var x, const Vector& omega, double coupling) {
  const Index d = x.rows();
  const Index K = x.cols();
  const Var s = ad::sin(x);
  const Var c = ad::cos(x);
  // R sin(phi - x_i) = mean_j(sin x_j) cos x_i - mean_j(cos x_j) sin x_i
  const Var s_bar = ad::repeat_rows(ad::scale(ad::col_sums(s), 1.0 / static_cast<double>(d)), d);
  const Var c_bar = ad::repeat_rows(ad::scale(ad::col_sums(c), 1.0 / static_cast<double>(d)), d);
  const Var pull = ad::scale(s_bar * c - c_bar * s, coupling);
  return pull + x.tape().constant(omega.replicate(1, K));
}

std::string to_string(Integrator i) { return i == Integrator::euler ? "euler" : "rk4"; }

Integrator integrator_from_string(const std::string& s) {
  if (s == "rk4") return Integrator::rk4;
  if (s == "euler") return Integrator::euler;
  throw std::invalid_argument("unknown integrator: " + s);
}

Vector StateSpaceModel::transition_sample(const Vector& x, const Vector& normal) const {
  return project(transition_mean(x) + transition_stddev().cwiseProduct(normal));
}

double StateSpaceModel::transition_logpdf(const Vector& x, const Vector& x_prev) const {
  ad::Tape tape;
  const auto kernel = transition()->at(tape.constant(x_prev));
  return kernel->log_density(tape.constant(x)).scalar();
}

double StateSpaceModel::observation_logpdf(const Vector& y, const Vector& x) const {
  ad::Tape tape;
  return observation()->log_density(tape.constant(x), y).scalar();
}

std::unique_ptr<filter::Transition> StateSpaceModel::transition() const {
  return std::make_unique<TrueTransition>(*this);
}

std::unique_ptr<filter::Observation> StateSpaceModel::observation() const {
  return std::make_unique<filter::GaussianObservation>(observation_stddev());
}

Lorenz96::Lorenz96(Lorenz96Config c) : c_(c) {
  if (c_.dim < 4) throw std::invalid_argument("Lorenz 96 needs at least 4 state dimensions");
}

Vector Lorenz96::transition_mean(const Vector& x) const {
  if (c_.integrator == Integrator::rk4) return lorenz96_rk4(x, c_.forcing, c_.dt);
  return lorenz96_step(x, c_.forcing, c_.dt, Vector::Zero(x.size()));
}

Var Lorenz96::transition_mean(Var x) const {
  if (c_.integrator == Integrator::rk4) return lorenz96_rk4(x, c_.forcing, c_.dt);
  return x + ad::scale(lorenz96_drift(x, c_.forcing), c_.dt);
}

Vector Lorenz96::transition_stddev() const { return Vector::Constant(c_.dim, std::sqrt(c_.dt) * c_.sigma_v); }

Vector Lorenz96::observation_stddev() const { return Vector::Constant(c_.dim, std::sqrt(c_.dt) * c_.sigma_r); }

Vector Lorenz96::simulation_start(Rng&) const {
  Vector x = Vector::Zero(c_.dim);
  x(0) = 1.0;
  return x;
}

Matrix Lorenz96::initial_particles(Rng& rng, Index count) const {
  return simulation_start(rng).replicate(1, count);
}

nlohmann::json Lorenz96::describe() const {
  return {{"system", name()}, {"d_x", c_.dim},         {"forcing", c_.forcing},
          {"dt", c_.dt},      {"sigma_v", c_.sigma_v}, {"sigma_r", c_.sigma_r},
          {"integrator", to_string(c_.integrator)}};
}

Kuramoto::Kuramoto(KuramotoConfig c, std::uint64_t model_seed) : c_(c), omega_(c.dim) {
  Rng rng = make_stream(model_seed, {stream::model});
  std::normal_distribution<double> normal(c_.omega_mean, c_.omega_std);
  for (Index i = 0; i < c_.dim; ++i) omega_(i) = normal(rng);
}

Kuramoto::Kuramoto(KuramotoConfig c, Vector omega) : c_(c), omega_(std::move(omega)) {
  if (omega_.size() != c_.dim) throw std::invalid_argument("Kuramoto: omega has wrong length");
}

Vector Kuramoto::transition_mean(const Vector& x) const {
  return kuramoto_step(x, omega_, c_.coupling, c_.dt, Vector::Zero(x.size()));
}

Var Kuramoto::transition_mean(Var x) const {
  return x + ad::scale(kuramoto_drift(x, omega_, c_.coupling), c_.dt);
}

Vector Kuramoto::transition_stddev() const { return Vector::Constant(c_.dim, std::sqrt(c_.dt) * c_.sigma_v); }

Vector Kuramoto::observation_stddev() const { return Vector::Constant(c_.dim, std::sqrt(c_.dt) * c_.sigma_r); }

Vector Kuramoto::simulation_start(Rng& rng) const {
  Vector x = initial_particles(rng, 1).col(0);
  for (int t = 0; t < c_.burn_in; ++t) x = transition_sample(x, standard_normal(rng, c_.dim));
  return x;
}

Matrix Kuramoto::initial_particles(Rng& rng, Index count) const {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  Matrix x(c_.dim, count);
  for (Index k = 0; k < count; ++k) {
    for (Index i = 0; i < c_.dim; ++i) x(i, k) = u(rng);
  }
  return x;
}

nlohmann::json Kuramoto::describe() const {
  return {{"system", name()},
          {"d_x", c_.dim},
          {"coupling", c_.coupling},
          {"dt", c_.dt},
          {"sigma_v", c_.sigma_v},
          {"sigma_r", c_.sigma_r},
          {"burn_in", c_.burn_in},
          {"omega", std::vector<double>(omega_.data(), omega_.data() + omega_.size())}};
}

Vector LinearGaussian::transition_stddev() const { return Vector::Constant(1, std::sqrt(c_.q)); }

Vector LinearGaussian::observation_stddev() const { return Vector::Constant(1, std::sqrt(c_.r)); }

Vector LinearGaussian::simulation_start(Rng& rng) const { return initial_particles(rng, 1).col(0); }

Matrix LinearGaussian::initial_particles(Rng& rng, Index count) const {
  std::normal_distribution<double> normal(c_.m0, std::sqrt(c_.p0));
  Matrix x(1, count);
  for (Index k = 0; k < count; ++k) x(0, k) = normal(rng);
  return x;
}

nlohmann::json LinearGaussian::describe() const {
  return {{"system", name()}, {"d_x", 1}, {"a", c_.a}, {"q", c_.q}, {"r", c_.r}, {"m0", c_.m0}, {"p0", c_.p0}};
}

KalmanResult kalman_filter(const LinearGaussianConfig& c, const Vector& y) {
  KalmanResult out{Vector(y.size()), Vector(y.size())};
  double m = c.m0;
  double p = c.p0;
  for (Index t = 0; t < y.size(); ++t) {
    const double mp = c.a * m;
    const double pp = c.a * c.a * p + c.q;
    const double gain = pp / (pp + c.r);
    m = mp + gain * (y(t) - mp);
    p = (1.0 - gain) * pp;
    out.mean(t) = m;
    out.variance(t) = p;
  }
  return out;
}

}  // namespace statemix::ssm
