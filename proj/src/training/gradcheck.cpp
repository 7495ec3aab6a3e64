#include "statemix/training/gradcheck.hpp"

#include "statemix/filter/particle_filter.hpp"
#include "statemix/ssm/trajectory.hpp"
#include "statemix/training/kernels.hpp"

namespace statemix::training {
namespace {

constexpr Index kDim = 5;
constexpr Index kComponents = 2;
constexpr Index kParticles = 4;

struct Setup {
  ssm::Lorenz96 model{ssm::Lorenz96Config{.dim = kDim}};
  nn::Network transition;
  nn::Network proposal;
  Matrix observations;
  Matrix initial;

  explicit Setup(std::uint64_t seed, Index T) {
    Rng rng = make_stream(seed, {stream::init});
    transition = nn::init_mixture_network(kDim, {16}, kComponents, kDim, rng);
    proposal = nn::init_mixture_network(2 * kDim, {16}, kComponents, kDim, rng);
    observations = ssm::simulate(model, T, seed).observations;
    initial = model.initial_particles(rng, kParticles);
  }

  std::vector<Matrix> inputs() const {
    std::vector<Matrix> out;
    for (const Matrix* p : transition.parameters()) out.push_back(*p);
    for (const Matrix* p : proposal.parameters()) out.push_back(*p);
    return out;
  }

  // Splits leaf Vars into the two bound networks.
  std::pair<nn::BoundNetwork, nn::BoundNetwork> bind(std::span<const Var> v) const {
    const auto nf = transition.parameters().size();
    nn::BoundNetwork f{&transition, std::vector<Var>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(nf))};
    nn::BoundNetwork p{&proposal, std::vector<Var>(v.begin() + static_cast<std::ptrdiff_t>(nf), v.end())};
    return {f, p};
  }
};

}  // namespace

ad::CheckResult check_filter_gradient(std::uint64_t seed, double tolerance) {
  const Setup s(seed, 3);
  const auto g = s.model.observation();
  const ad::GraphFn fn = [&](ad::Tape& tape, std::span<const Var> v) {
    auto [fb, pb] = s.bind(v);
    const NetworkTransition f(fb, kComponents, kDim, dist::Sampler::stop_gradient);
    const NetworkProposal pi(pb, kComponents, kDim, dist::Sampler::stop_gradient);
    Rng rng = make_stream(seed, {stream::filter});
    filter::FilterOptions opts;
    opts.particles = kParticles;
    opts.differentiable = true;
    return filter::run_filter(tape, s.initial, s.observations, f, &pi, *g, rng, opts).objective;
  };
  return ad::check_gradient("filter_objective", fn, s.inputs(), 1e-5, tolerance);
}

ad::CheckResult check_resampling_gradient(std::uint64_t seed, double tolerance) {
  const Setup s(seed, 1);
  const auto g = s.model.observation();
  const Vector y = s.observations.col(0);
  filter::FilterOptions opts;
  opts.particles = kParticles;
  opts.differentiable = true;

  // Step 1 under fixed randomness; returns the normalized log-weights as a Var.
  auto first_step = [&](ad::Tape& tape, std::span<const Var> v) {
    auto [fb, pb] = s.bind(v);
    const NetworkTransition f(fb, kComponents, kDim, dist::Sampler::stop_gradient);
    const NetworkProposal pi(pb, kComponents, kDim, dist::Sampler::stop_gradient);
    Rng rng = make_stream(seed, {stream::filter});
    const Var x0 = tape.constant(s.initial);
    const Var w0 = tape.constant(filter::RowVector::Constant(kParticles, -std::log(double(kParticles))));
    return filter::sir_step(x0, w0, y, f, &pi, *g, rng, opts, 1).log_norm_weights;
  };

  const std::vector<Matrix> inputs = s.inputs();
  std::vector<Index> frozen;
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.variable(m));
    const Var w1 = first_step(tape, leaves);
    Rng rng = make_stream(seed, {stream::update});
    const filter::Resampled r = filter::resample_stopgrad(w1, rng, true);
    frozen = r.ancestors;
    const auto grads = ad::backward(ad::sum(r.log_pre_weights));
    for (const Var& l : leaves) analytic.push_back(grads.wrt(l));
  }
  const ad::GraphFn oracle = [&](ad::Tape& tape, std::span<const Var> v) {
    return ad::sum(ad::gather_cols(first_step(tape, v), frozen));
  };
  const auto numeric = ad::numeric_gradient(oracle, inputs, 1e-5);
  ad::CheckResult r{"resampling_pre_weights", ad::relative_error(analytic, numeric), tolerance};
  return r;
}

}  // namespace statemix::training
