#include "statemix/bench/commands.hpp"

#include <fstream>

#include "statemix/autodiff/gradcheck.hpp"
#include "statemix/bench/metrics.hpp"
#include "statemix/bench/sweep.hpp"
#include "statemix/ssm/trajectory.hpp"
#include "statemix/training/gradcheck.hpp"

namespace statemix::bench {
namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void say(const CommandContext& ctx, const std::string& s) {
  if (ctx.log) ctx.log(s);
}

// Writes checkpoints as training reaches them.
class CheckpointWriter : public training::TrainObserver {
 public:
  CheckpointWriter(std::filesystem::path dir, const CommandContext& ctx) : dir_(std::move(dir)), ctx_(ctx) {}
  void on_checkpoint(const std::string& label, const nn::Checkpoint& c) override {
    nn::save_checkpoint(dir_ / (label + ".json"), c);
    say(ctx_, "checkpoint " + label);
  }

 private:
  std::filesystem::path dir_;
  const CommandContext& ctx_;
};

nlohmann::json suite(const std::string& name, const std::vector<ad::CheckResult>& checks, double tolerance) {
  double worst = 0.0;
  bool passed = true;
  std::string worst_name;
  for (const auto& c : checks) {
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
    passed = passed && c.passed();
  }
  return {{"name", name},      {"checks", checks.size()}, {"max_rel_error", worst},
          {"worst", worst_name}, {"tolerance", tolerance},  {"passed", passed}};
}

}  // namespace

nlohmann::json simulate_command(const CommandContext& ctx) {
  std::filesystem::create_directories(ctx.out);
  const auto model = make_model(ctx.config);
  const auto traj = ssm::simulate(*model, ctx.config.length, ctx.config.seed);
  const auto csv = ctx.out / "trajectory.csv";
  ssm::write_trajectory_csv(csv, traj);
  ssm::write_trajectory_sidecar(ctx.out / "trajectory.json", traj);
  return {{"command", "simulate"},
          {"trajectory", csv.string()},
          {"length", traj.length()},
          {"series_hash", ssm::series_hash(traj.observations)}};
}

nlohmann::json train_command(const CommandContext& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.train_method != Method::statemixnn && cfg.train_method != Method::propmixnn) {
    throw ConfigError("training.method must be StateMixNN or PropMixNN");
  }
  std::filesystem::create_directories(ctx.out / "checkpoints");
  const auto model = make_model(cfg);
  std::vector<Matrix> series;
  for (Index i = 0; i < cfg.train_series; ++i) {
    const auto traj = ssm::simulate(*model, cfg.length, train_series_seed(cfg.seed, 0, i));
    const std::string stem = cfg.train_series == 1 ? "train_series" : "train_series_" + std::to_string(i);
    ssm::write_trajectory_csv(ctx.out / (stem + ".csv"), traj);
    ssm::write_trajectory_sidecar(ctx.out / (stem + ".json"), traj);
    series.push_back(traj.observations);
  }
  training::TrainConfig tc = cfg.training;
  tc.particles = cfg.particles;
  tc.seed = stream_seed(cfg.seed, {stream::update});
  tc.record_wall_time = ctx.timing;
  CheckpointWriter writer(ctx.out / "checkpoints", ctx);
  const auto learned = cfg.train_method == Method::statemixnn ? training::statemixnn_train(series, *model, tc, &writer)
                                                              : training::propmixnn_train(series, *model, tc, &writer);
  const auto model_path = ctx.out / "model.json";
  nn::save_checkpoint(model_path, learned.checkpoint(*model));
  training::write_history_csv(ctx.out / "history.csv", learned.history);
  nlohmann::json j = {{"command", "train"},
                      {"method", to_string(cfg.train_method)},
                      {"model", model_path.string()},
                      {"filter_runs", learned.filter_runs}};
  if (!learned.history.empty()) j["final_objective"] = learned.history.back().objective;
  return j;
}

nlohmann::json evaluate_command(const CommandContext& ctx, const std::optional<std::filesystem::path>& checkpoint,
                                const std::filesystem::path& series) {
  const auto& cfg = ctx.config;
  std::filesystem::create_directories(ctx.out);
  const auto model = make_model(cfg);
  const auto traj = ssm::read_trajectory_csv(series);
  if (traj.observations.rows() != model->obs_dim()) throw ConfigError("series dimension does not match the model");

  std::optional<nn::Checkpoint> ckpt;
  FilterSetup setup;
  std::string method = to_string(Method::bpf);
  if (checkpoint) {
    ckpt = nn::load_checkpoint(*checkpoint);
    if (ckpt->state_dim != model->state_dim()) throw ConfigError("checkpoint state dimension does not match the model");
    setup.transition = ckpt->transition ? &*ckpt->transition : nullptr;
    setup.proposal = ckpt->proposal ? &*ckpt->proposal : nullptr;
    setup.transition_components = std::max<Index>(1, ckpt->transition_components);
    setup.proposal_components = std::max<Index>(1, ckpt->proposal_components);
    if (ckpt->metadata.contains("sampler")) {
      setup.sampler = dist::sampler_from_string(ckpt->metadata.at("sampler").get<std::string>());
    }
    method = to_string(ckpt->transition ? Method::statemixnn : Method::propmixnn);
  }
  Rng rng = make_stream(cfg.seed, {stream::filter});
  const auto result = run_setup(setup, *model, traj.observations, cfg.particles, rng);
  filter::write_filter_csv(ctx.out / "filter.csv", result);

  const bool has_truth = traj.states.cols() == traj.length() + 1 && traj.states.rows() == model->state_dim();
  std::optional<Matrix> truth;
  if (has_truth) truth = traj.hidden();
  nlohmann::json summary = filter::filter_summary(result, truth, config_hash(cfg), cfg.seed);
  summary["method"] = method;
  summary["particles"] = cfg.particles;
  summary["series_hash"] = ssm::series_hash(traj.observations);
  if (truth) {
    const double mse = compute_mse(result.means, *truth, model->periodic());
    summary["mse"] = mse;
    if (checkpoint) {
      Rng base_rng = make_stream(cfg.seed, {stream::filter, 1});
      const auto base = run_setup({}, *model, traj.observations, cfg.particles, base_rng);
      const double base_mse = compute_mse(base.means, *truth, model->periodic());
      summary["bpf_mse"] = base_mse;
      summary["ri_mse"] = relative_improvement(mse, base_mse);
    }
  }
  write_json(ctx.out / "summary.json", summary);
  summary["command"] = "evaluate";
  return summary;
}

nlohmann::json sweep_command(const CommandContext& ctx) {
  std::filesystem::create_directories(ctx.out);
  save_config(ctx.out / "config.toml", ctx.config);
  SweepOptions options;
  options.threads = ctx.threads;
  options.record_wall_time = ctx.timing;
  options.model_dir = ctx.out / "models";
  options.log = ctx.log;
  const SweepResult result = run_sweep(ctx.config, options);
  write_metrics_csv(ctx.out / "metrics.csv", result.metrics);
  write_summary_csv(ctx.out / "summary.csv", result.summary);
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : result.failures) {
    nlohmann::json j = {{"swept_value", f.swept_value},
                        {"method", to_string(f.method)},
                        {"S", f.components},
                        {"error", f.error}};
    j["run"] = f.run ? nlohmann::json(*f.run) : nlohmann::json(nullptr);
    failures.push_back(j);
  }
  write_json(ctx.out / "failures.json", failures);
  return {{"command", "sweep"},
          {"metrics", (ctx.out / "metrics.csv").string()},
          {"summary", (ctx.out / "summary.csv").string()},
          {"rows", result.metrics.size()},
          {"failures", result.failures.size()}};
}

nlohmann::json gradcheck_command(const CommandContext& ctx) {
  const std::uint64_t seed = ctx.config.seed;
  nlohmann::json suites = nlohmann::json::array();
  Rng rng = make_stream(seed, {stream::init});
  say(ctx, "primitives");
  suites.push_back(suite("primitives", ad::check_primitives(rng, 1e-5), 1e-5));
  say(ctx, "random graphs");
  suites.push_back(suite("random_graphs", ad::check_random_graphs(seed, 100, 8, 1e-5), 1e-5));
  say(ctx, "filter objective");
  std::vector<ad::CheckResult> filter_checks;
  std::vector<ad::CheckResult> resample_checks;
  for (std::uint64_t s = 0; s < 3; ++s) {
    filter_checks.push_back(training::check_filter_gradient(seed + s, 1e-3));
    resample_checks.push_back(training::check_resampling_gradient(seed + s, 1e-4));
  }
  suites.push_back(suite("filter_objective", filter_checks, 1e-3));
  suites.push_back(suite("resampling_pre_weights", resample_checks, 1e-4));
  bool passed = true;
  for (const auto& s : suites) passed = passed && s.at("passed").get<bool>();
  nlohmann::json report = {{"command", "gradcheck"}, {"seed", seed}, {"suites", suites}, {"passed", passed}};
  if (!ctx.out.empty()) {
    std::filesystem::create_directories(ctx.out);
    write_json(ctx.out / "gradcheck.json", report);
  }
  return report;
}

}  // namespace statemix::bench
