#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statemix/distributions/mixture.hpp"
#include "statemix/neuralnet/adam.hpp"
#include "statemix/neuralnet/checkpoint.hpp"
#include "statemix/ssm/models.hpp"

namespace statemix::training {

using ad::Index;
using ad::Matrix;

struct TrainConfig {
  /// Number of telescoping batches; 0 selects ceil(T / 5).
  Index batches = 0;
  Index steps_per_batch = 50;
  Index iterations = 20;
  Index particles = 100;
  Index transition_components = 1;
  Index proposal_components = 1;
  std::vector<Index> hidden{128, 256};
  nn::AdamOptions adam{};
  double clip_norm = 10.0;
  dist::Sampler sampler = dist::Sampler::stop_gradient;
  std::uint64_t seed = 0;
  double max_underflow_fraction = 1.0;
  bool record_wall_time = false;
};

/// Throws std::invalid_argument unless every count is positive (batches may be 0) and lr >= 0.
void validate(const TrainConfig& config);

Index resolve_batches(const TrainConfig& config, Index series_length);

/// Length of the b-th telescoping prefix, ceil(b T / B) for b = 1..B.
Index batch_prefix_length(Index b, Index batches, Index series_length);

enum class Phase { warmup, prop, trans };
std::string to_string(Phase p);

/// Which network receives the update.
enum class Role { learn_transition, learn_proposal };

/// The fixed counterpart of the learned network in an update step.
struct Partner {
  enum class Kind {
    network,          // the other learned network, held constant
    same,             // pi = f, both given by the learned transition network
    true_transition,  // the SSM's own transition kernel
  };
  Kind kind = Kind::network;
  const nn::Network* net = nullptr;

  static Partner network(const nn::Network& n) { return {Kind::network, &n}; }
  static Partner same() { return {Kind::same, nullptr}; }
  static Partner true_transition() { return {Kind::true_transition, nullptr}; }
};

struct StepKey {
  Phase phase = Phase::warmup;
  Index a = 0;
  Index b = 1;
  Index j = 1;
};

struct StepRecord {
  StepKey key;
  double objective = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
  double wall_ms = 0.0;
  int retries = 0;
  std::uint64_t learn_hash_before = 0;
  std::uint64_t static_hash = 0;
  Index series = 0;
  Index observations = 0;
};

/// Raised when an update step fails twice; carries the key of the failing step.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(StepKey key, const std::string& what);
  const StepKey& key() const { return key_; }

 private:
  StepKey key_;
};

class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_step(const StepRecord&) {}
  /// Called after each conditional update with the resulting learned network.
  virtual void on_update(Phase, Index /*a*/, const nn::Network&) {}
  virtual void on_checkpoint(const std::string& /*label*/, const nn::Checkpoint&) {}
};

/// One gradient ascent step on the summed log-weight objective over `y`,
/// differentiating with respect to `learn` only.
StepRecord update_step(nn::Network& learn, nn::AdamState& adam, Partner partner, Role role, const Matrix& y,
                       const ssm::StateSpaceModel& model, const TrainConfig& config, StepKey key);

/// B x J update steps over nested prefixes, starting from `initial` with fresh ADAM moments.
/// With several equal-length training series, step (b, j) uses series ((b - 1) J + j - 1) mod N.
nn::Network conditional_update(const nn::Network& initial, Partner partner, Role role,
                               std::span<const Matrix> series, const ssm::StateSpaceModel& model,
                               const TrainConfig& config, Phase phase, Index a, TrainObserver* observer = nullptr);

struct LearnedModel {
  std::optional<nn::Network> transition;
  nn::Network proposal;
  std::vector<StepRecord> history;
  TrainConfig config;
  Index filter_runs = 0;

  nn::Checkpoint checkpoint(const ssm::StateSpaceModel& model) const;
};

/// Random init, bootstrap warm-up of the transition, then `iterations` alternations
/// updating the proposal and then the transition.
LearnedModel statemixnn_train(std::span<const Matrix> series, const ssm::StateSpaceModel& model,
                              const TrainConfig& config, TrainObserver* observer = nullptr);

/// Learns only the proposal, with the SSM's true transition.
LearnedModel propmixnn_train(std::span<const Matrix> series, const ssm::StateSpaceModel& model,
                             const TrainConfig& config, TrainObserver* observer = nullptr);

/// CSV `phase,a,b,j,objective,grad_norm,clipped,wall_ms`.
void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace statemix::training
