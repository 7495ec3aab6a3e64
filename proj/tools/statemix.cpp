#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "statemix/bench/commands.hpp"

namespace {

int fail(const std::string& kind, const std::string& message) {
  nlohmann::json j = {{"error", {{"type", kind}, {"message", message}}}};
  std::cerr << j.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statemix: learned-kernel particle filters"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 1;
  bool timing = false;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment TOML")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Overrides the seed in the config");
  app.add_option("--out", out, "Output directory");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--timing", timing, "Record wall-clock times (outputs are then not byte-reproducible)");
  app.add_flag("--quiet", quiet, "No progress on stderr");

  auto* simulate = app.add_subcommand("simulate", "Simulate one trajectory");
  auto* train = app.add_subcommand("train", "Train the configured method");
  auto* evaluate = app.add_subcommand("evaluate", "Run a filter on a series");
  std::string checkpoint;
  std::string series;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint JSON; omit for the BPF")->check(CLI::ExistingFile);
  evaluate->add_option("--series", series, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  auto* sweep = app.add_subcommand("sweep", "Run the sweep in the config");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    statemix::bench::CommandContext ctx;
    if (!config_path.empty()) ctx.config = statemix::bench::load_config(config_path);
    if (seed) ctx.config.seed = *seed;
    ctx.out = out;
    ctx.threads = threads;
    ctx.timing = timing;
    if (!quiet) ctx.log = [](const std::string& s) { std::cerr << s << '\n'; };

    nlohmann::json report;
    if (*simulate) {
      report = statemix::bench::simulate_command(ctx);
    } else if (*train) {
      report = statemix::bench::train_command(ctx);
    } else if (*evaluate) {
      std::optional<std::filesystem::path> ckpt;
      if (!checkpoint.empty()) ckpt = checkpoint;
      report = statemix::bench::evaluate_command(ctx, ckpt, series);
    } else if (*sweep) {
      report = statemix::bench::sweep_command(ctx);
    } else if (*gradcheck) {
      report = statemix::bench::gradcheck_command(ctx);
    }
    std::cout << report.dump(2) << '\n';
    if (report.contains("passed") && !report.at("passed").get<bool>()) return 1;
    return 0;
  } catch (const statemix::bench::ConfigError& e) {
    return fail("config", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}
