#include "statemix/training/trainer.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

#include "statemix/common/format.hpp"
#include "statemix/filter/particle_filter.hpp"
#include "statemix/training/kernels.hpp"

namespace statemix::training {

void validate(const TrainConfig& c) {
  if (c.batches < 0 || c.steps_per_batch < 1 || c.iterations < 0 || c.particles < 1 ||
      c.transition_components < 1 || c.proposal_components < 1) {
    throw std::invalid_argument("training counts must be positive");
  }
  if (!(c.adam.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(c.clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  for (Index h : c.hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be positive");
  }
}

Index resolve_batches(const TrainConfig& config, Index series_length) {
  return config.batches > 0 ? config.batches : (series_length + 4) / 5;
}

Index batch_prefix_length(Index b, Index batches, Index series_length) {
  if (batches < 1 || b < 1 || b > batches) throw std::out_of_range("batch index out of range");
  if (batches > series_length) throw std::invalid_argument("more batches than observations");
  return (b * series_length + batches - 1) / batches;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::warmup:
      return "warmup";
    case Phase::prop:
      return "prop";
    case Phase::trans:
      return "trans";
  }
  return "?";
}

TrainingError::TrainingError(StepKey key, const std::string& what)
    : std::runtime_error(to_string(key.phase) + " a=" + std::to_string(key.a) + " b=" + std::to_string(key.b) +
                         " j=" + std::to_string(key.j) + ": " + what),
      key_(key) {}

StepRecord update_step(nn::Network& learn, nn::AdamState& adam, Partner partner, Role role, const Matrix& y,
                       const ssm::StateSpaceModel& model, const TrainConfig& config, StepKey key) {
  if (y.cols() == 0) throw std::invalid_argument("update_step needs at least one observation");
  const bool valid = role == Role::learn_transition ? partner.kind != Partner::Kind::true_transition
                                                    : partner.kind != Partner::Kind::same;
  if (!valid || (partner.kind == Partner::Kind::network && partner.net == nullptr)) {
    throw std::invalid_argument("partner kind does not fit the role");
  }
  const auto start = std::chrono::steady_clock::now();
  StepRecord rec;
  rec.key = key;
  rec.observations = y.cols();
  rec.learn_hash_before = nn::parameter_hash(learn);
  rec.static_hash = partner.net ? nn::parameter_hash(*partner.net) : 0;

  const Index dx = model.state_dim();
  const auto g = model.observation();
  for (int attempt = 0;; ++attempt) {
    try {
      ad::Tape tape;
      const nn::BoundNetwork bound = nn::bind(tape, learn, true);
      std::unique_ptr<filter::Transition> f;
      std::unique_ptr<filter::Proposal> pi;
      if (role == Role::learn_transition) {
        f = std::make_unique<NetworkTransition>(bound, config.transition_components, dx, config.sampler);
        if (partner.kind == Partner::Kind::network) {
          pi = std::make_unique<NetworkProposal>(nn::bind(tape, *partner.net, false), config.proposal_components, dx,
                                                 config.sampler);
        }
      } else {
        pi = std::make_unique<NetworkProposal>(bound, config.proposal_components, dx, config.sampler);
        if (partner.kind == Partner::Kind::network) {
          f = std::make_unique<NetworkTransition>(nn::bind(tape, *partner.net, false), config.transition_components,
                                                  dx, config.sampler);
        } else {
          f = model.transition();
        }
      }
      Rng rng = make_stream(config.seed, {stream::update, static_cast<std::uint64_t>(key.phase),
                                          static_cast<std::uint64_t>(key.a), static_cast<std::uint64_t>(key.b),
                                          static_cast<std::uint64_t>(key.j), static_cast<std::uint64_t>(attempt)});
      filter::FilterOptions options;
      options.particles = config.particles;
      options.differentiable = true;
      options.max_underflow_fraction = config.max_underflow_fraction;
      options.keep_ensembles = false;
      const Matrix x0 = model.initial_particles(rng, config.particles);
      const auto result = filter::run_filter(tape, x0, y, *f, pi.get(), *g, rng, options);
      if (!std::isfinite(result.objective.scalar())) throw filter::DegeneracyError(y.cols(), "non-finite objective");

      const auto grads = ad::backward(result.objective);
      std::vector<Matrix> ascent = nn::parameter_gradients(grads, bound);
      for (auto& m : ascent) m = -m;
      rec.grad_norm = nn::clip_global_norm(ascent, config.clip_norm);
      rec.clipped = rec.grad_norm > config.clip_norm;
      nn::adam_step(adam, learn, ascent);
      rec.objective = result.objective.scalar();
      break;
    } catch (const filter::DegeneracyError& e) {
      if (attempt > 0) throw TrainingError(key, e.what());
    } catch (const nn::NonFiniteGradient& e) {
      if (attempt > 0) throw TrainingError(key, std::string("non-finite gradient in ") + e.parameter());
    }
    ++rec.retries;
  }
  if (config.record_wall_time) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

nn::Network conditional_update(const nn::Network& initial, Partner partner, Role role,
                               std::span<const Matrix> series, const ssm::StateSpaceModel& model,
                               const TrainConfig& config, Phase phase, Index a, TrainObserver* observer) {
  validate(config);
  if (series.empty()) throw std::invalid_argument("no training series");
  const Index T = series.front().cols();
  for (const auto& y : series) {
    if (y.cols() != T || y.rows() != series.front().rows()) throw std::invalid_argument("training series differ in shape");
  }
  const auto n = static_cast<Index>(series.size());
  const Index B = resolve_batches(config, T);
  nn::Network net = initial;
  nn::AdamState adam = nn::make_adam(net, config.adam);
  for (Index b = 1; b <= B; ++b) {
    const Index length = batch_prefix_length(b, B, T);
    for (Index j = 1; j <= config.steps_per_batch; ++j) {
      const Index s = ((b - 1) * config.steps_per_batch + j - 1) % n;
      const Matrix prefix = series[static_cast<std::size_t>(s)].leftCols(length);
      StepRecord rec = update_step(net, adam, partner, role, prefix, model, config, {phase, a, b, j});
      rec.series = s;
      if (observer) observer->on_step(rec);
    }
  }
  if (observer) observer->on_update(phase, a, net);
  return net;
}

nn::Checkpoint LearnedModel::checkpoint(const ssm::StateSpaceModel& model) const {
  nn::Checkpoint c;
  c.state_dim = model.state_dim();
  c.obs_dim = model.obs_dim();
  c.transition_components = transition ? config.transition_components : 0;
  c.proposal_components = config.proposal_components;
  c.transition = transition;
  c.proposal = proposal;
  c.metadata = {{"model", model.describe()},
                {"seed", config.seed},
                {"particles", config.particles},
                {"batches", config.batches},
                {"steps_per_batch", config.steps_per_batch},
                {"iterations", config.iterations},
                {"learning_rate", config.adam.learning_rate},
                {"clip_norm", config.clip_norm},
                {"sampler", dist::to_string(config.sampler)},
                {"filter_runs", filter_runs}};
  return c;
}

namespace {

// Appends every step to the model history before forwarding.
class Recorder : public TrainObserver {
 public:
  Recorder(LearnedModel& out, TrainObserver* next) : out_(out), next_(next) {}
  void on_step(const StepRecord& r) override {
    out_.history.push_back(r);
    ++out_.filter_runs;
    if (next_) next_->on_step(r);
  }
  void on_update(Phase p, Index a, const nn::Network& n) override {
    if (next_) next_->on_update(p, a, n);
  }
  void checkpoint(const std::string& label, const ssm::StateSpaceModel& model) {
    if (next_) next_->on_checkpoint(label, out_.checkpoint(model));
  }

 private:
  LearnedModel& out_;
  TrainObserver* next_;
};

void check_dims(std::span<const Matrix> series, const ssm::StateSpaceModel& model) {
  if (series.empty()) throw std::invalid_argument("no training series");
  for (const auto& y : series) {
    if (y.rows() != model.obs_dim()) throw std::invalid_argument("observation rows must equal d_y");
    if (y.cols() < 1) throw std::invalid_argument("training series is empty");
  }
}

}  // namespace

LearnedModel statemixnn_train(std::span<const Matrix> y, const ssm::StateSpaceModel& model,
                              const TrainConfig& config, TrainObserver* observer) {
  validate(config);
  check_dims(y, model);
  const Index dx = model.state_dim();
  LearnedModel out;
  out.config = config;
  Recorder rec(out, observer);
  Rng init = make_stream(config.seed, {stream::init});
  nn::Network f = nn::init_mixture_network(dx, config.hidden, config.transition_components, dx, init);
  out.proposal = nn::init_mixture_network(dx + model.obs_dim(), config.hidden, config.proposal_components, dx, init);

  out.transition = conditional_update(f, Partner::same(), Role::learn_transition, y, model, config, Phase::warmup,
                                      0, &rec);
  rec.checkpoint("warmup", model);
  for (Index a = 1; a <= config.iterations; ++a) {
    out.proposal = conditional_update(out.proposal, Partner::network(*out.transition), Role::learn_proposal, y,
                                      model, config, Phase::prop, a, &rec);
    out.transition = conditional_update(*out.transition, Partner::network(out.proposal), Role::learn_transition, y,
                                        model, config, Phase::trans, a, &rec);
    rec.checkpoint("iter_" + std::to_string(a), model);
  }
  return out;
}

LearnedModel propmixnn_train(std::span<const Matrix> y, const ssm::StateSpaceModel& model,
                             const TrainConfig& config, TrainObserver* observer) {
  validate(config);
  check_dims(y, model);
  const Index dx = model.state_dim();
  LearnedModel out;
  out.config = config;
  Recorder rec(out, observer);
  Rng init = make_stream(config.seed, {stream::init});
  out.proposal = nn::init_mixture_network(dx + model.obs_dim(), config.hidden, config.proposal_components, dx, init);
  for (Index a = 1; a <= config.iterations; ++a) {
    out.proposal = conditional_update(out.proposal, Partner::true_transition(), Role::learn_proposal, y, model,
                                      config, Phase::prop, a, &rec);
    rec.checkpoint("iter_" + std::to_string(a), model);
  }
  return out;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "phase,a,b,j,objective,grad_norm,clipped,wall_ms\n";
  for (const auto& r : history) {
    out << to_string(r.key.phase) << ',' << r.key.a << ',' << r.key.b << ',' << r.key.j << ','
        << format_double(r.objective) << ',' << format_double(r.grad_norm) << ',' << (r.clipped ? "true" : "false")
        << ',' << format_double(r.wall_ms) << '\n';
  }
}

}  // namespace statemix::training
