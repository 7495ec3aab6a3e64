#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "statemix/autodiff/gradcheck.hpp"
#include "statemix/bench/config.hpp"
#include "statemix/bench/metrics.hpp"
#include "statemix/bench/sweep.hpp"
#include "statemix/distributions/mixture.hpp"
#include "statemix/filter/particle_filter.hpp"
#include "statemix/ssm/trajectory.hpp"
#include "statemix/training/gradcheck.hpp"
#include "statemix/training/kernels.hpp"
#include "statemix/training/trainer.hpp"

namespace {

using namespace statemix;
namespace fs = std::filesystem;
using ad::Index;
using ad::Matrix;
using filter::RowVector;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double seconds) {
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << id << ' ' << name << ": " << o.detail << " [" << fmt(seconds) << " s]"
            << std::endl;
}

template <typename F>
void run(int id, const std::string& name, F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

Outcome gradient_suite() {
  Rng rng{1};
  double worst_prim = 0.0;
  double worst_graph = 0.0;
  double worst_filter = 0.0;
  bool pass = true;
  for (const auto& r : ad::check_primitives(rng, 1e-5)) {
    worst_prim = std::max(worst_prim, r.max_rel_error);
    pass = pass && r.passed();
  }
  const auto graphs = ad::check_random_graphs(2, 100, 8, 1e-5);
  for (const auto& r : graphs) {
    worst_graph = std::max(worst_graph, r.max_rel_error);
    pass = pass && r.passed();
  }
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = training::check_filter_gradient(seed, 1e-3);
    worst_filter = std::max(worst_filter, r.max_rel_error);
    pass = pass && r.passed();
  }
  return {pass && graphs.size() == 100, "max rel err primitives " + fmt(worst_prim) + ", " +
                                            std::to_string(graphs.size()) + " graphs " + fmt(worst_graph) +
                                            " (< 1e-5), filter objective " + fmt(worst_filter) + " (< 1e-3)"};
}

Outcome forward_equivalence() {
  const ssm::Lorenz96 model({.dim = 5});
  Rng init{77};
  const nn::Network fnet = nn::init_mixture_network(5, {32, 32}, 2, 5, init);
  const nn::Network pnet = nn::init_mixture_network(10, {32, 32}, 2, 5, init);
  auto filter = [&](ad::Tape& tape, const ssm::Trajectory& traj, std::uint64_t seed, bool differentiable) {
    const training::NetworkTransition f(nn::bind(tape, fnet, differentiable), 2, 5, dist::Sampler::stop_gradient);
    const training::NetworkProposal pi(nn::bind(tape, pnet, differentiable), 2, 5, dist::Sampler::stop_gradient);
    const auto g = model.observation();
    Rng rng = make_stream(seed, {stream::filter});
    const Matrix x0 = model.initial_particles(rng, 50);
    return filter::run_filter(tape, x0, traj.observations, f, &pi, *g, rng, {50, differentiable});
  };
  int identical = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto traj = ssm::simulate(model, 20, 1000 + seed);
    ad::Tape t1;
    ad::Tape t2;
    const auto sir = filter(t1, traj, seed, false);
    const auto dpf = filter(t2, traj, seed, true);
    bool same = sir.means == dpf.means && sir.ensembles.size() == dpf.ensembles.size();
    for (std::size_t t = 0; same && t < sir.ensembles.size(); ++t) {
      same = sir.ensembles[t].particles == dpf.ensembles[t].particles &&
             sir.ensembles[t].log_weights == dpf.ensembles[t].log_weights;
    }
    identical += same ? 1 : 0;
  }
  return {identical == 50, std::to_string(identical) + "/50 seeds bitwise identical"};
}

Outcome bootstrap_cancellation() {
  const ssm::Lorenz96 model({.dim = 5});
  const auto f = model.transition();
  const filter::TransitionAsProposal pi(*f);
  const auto g = model.observation();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto traj = ssm::simulate(model, 20, 500 + seed);
    ad::Tape tape;
    Rng rng{seed};
    const auto res =
        filter::run_filter(tape, model.initial_particles(rng, 50), traj.observations, *f, &pi, *g, rng, {50, true});
    for (std::size_t t = 0; t < res.ensembles.size(); ++t) {
      ad::Tape t2;
      const RowVector log_g =
          g->log_density(t2.constant(res.ensembles[t].particles), traj.observations.col(static_cast<Index>(t))).value();
      const RowVector log_g_norm = log_g.array() - ad::logsumexp(log_g.transpose().array());
      worst = std::max(worst, (res.ensembles[t].log_weights - log_g_norm).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-10, "max |log w - log g| (normalized) " + fmt(worst) + " (< 1e-10)"};
}

Outcome kalman_oracle() {
  const ssm::LinearGaussianConfig cfg{0.9, 0.5, 0.5};
  const ssm::LinearGaussian model(cfg);
  const Index T = 50;
  const auto traj = ssm::simulate(model, T, 2024);
  const auto kalman = ssm::kalman_filter(cfg, traj.observations.row(0).transpose());
  const auto f = model.transition();
  const auto g = model.observation();
  const int replicates = 16;
  Matrix means(replicates, T);
  for (int r = 0; r < replicates; ++r) {
    ad::Tape tape;
    Rng rng = make_stream(7, {stream::filter, static_cast<std::uint64_t>(r)});
    const auto res = filter::run_filter(tape, model.initial_particles(rng, 5000), traj.observations, *f, nullptr, *g,
                                        rng, {5000, false, 1.0, false});
    means.row(r) = res.means.row(0);
  }
  int within = 0;
  for (Index t = 0; t < T; ++t) {
    const double mu = means.col(t).mean();
    const double se = std::sqrt((means.col(t).array() - mu).square().sum() / (replicates - 1));
    for (int r = 0; r < replicates; ++r) within += std::abs(means(r, t) - kalman.mean(t)) <= 3.0 * se ? 1 : 0;
  }
  const double frac = within / static_cast<double>(replicates * T);
  return {frac >= 0.95, fmt(100 * frac) + "% of (replicate, t) within 3 MC s.e. (>= 95%)"};
}

Outcome mixture_correctness() {
  Rng rng{19};
  std::uniform_real_distribution<double> mu_dist(-5.0, 5.0);
  std::uniform_real_distribution<double> c_dist(0.2, 3.0);
  const double lo = -40.0;
  const double hi = 40.0;
  const Index n = 160000;
  const double h = (hi - lo) / static_cast<double>(n);
  Matrix grid(1, n + 1);
  for (Index i = 0; i <= n; ++i) grid(0, i) = lo + h * static_cast<double>(i);
  double worst_norm = 0.0;
  double min_p = 1.0;
  const Index draws = 20000;
  for (int rep = 0; rep < 20; ++rep) {
    const int S = 1 + rep % 5;
    std::vector<double> mus;
    std::vector<double> cs;
    for (int s = 0; s < S; ++s) {
      mus.push_back(mu_dist(rng));
      cs.push_back(c_dist(rng));
    }
    {
      ad::Tape tape;
      dist::GaussianMixture m;
      for (int s = 0; s < S; ++s) {
        m.components.push_back({tape.constant(Matrix::Constant(1, n + 1, mus[s])),
                                tape.constant(Matrix::Constant(1, n + 1, cs[s]))});
      }
      const Eigen::ArrayXXd p = dist::log_density(m, tape.constant(grid)).value().array().exp();
      double total = p(0, 0) + p(0, n);
      for (Index i = 1; i < n; ++i) total += (i % 2 == 1 ? 4.0 : 2.0) * p(0, i);
      worst_norm = std::max(worst_norm, std::abs(total * h / 3.0 - 1.0));
    }
    auto cdf = [&](double v) {
      double c = 0.0;
      for (int s = 0; s < S; ++s) c += boost::math::cdf(boost::math::normal(mus[s], cs[s]), v) / S;
      return c;
    };
    // equiprobable bins from the mixture quantiles
    const int bins = 40;
    std::vector<double> edges{-std::numeric_limits<double>::infinity()};
    for (int b = 1; b < bins; ++b) {
      double a = -60.0;
      double z = 60.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + z);
        (cdf(mid) < static_cast<double>(b) / bins ? a : z) = mid;
      }
      edges.push_back(0.5 * (a + z));
    }
    edges.push_back(std::numeric_limits<double>::infinity());
    for (const auto sampler : {dist::Sampler::stop_gradient, dist::Sampler::gumbel_softmax}) {
      ad::Tape tape;
      dist::GaussianMixture m;
      for (int s = 0; s < S; ++s) {
        m.components.push_back({tape.variable(Matrix::Constant(1, draws, mus[s])),
                                tape.variable(Matrix::Constant(1, draws, cs[s]))});
      }
      const auto noise = dist::draw_mixture_noise(rng, S, 1, draws);
      const Matrix x = dist::sample(m, noise, sampler).value();
      std::vector<double> counts(bins, 0.0);
      for (Index k = 0; k < draws; ++k) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), x(0, k));
        counts[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
      }
      double chi2 = 0.0;
      const double expected = static_cast<double>(draws) / bins;
      for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
      const boost::math::chi_squared ref(bins - 1);
      min_p = std::min(min_p, boost::math::cdf(boost::math::complement(ref, chi2)));
    }
  }
  return {worst_norm <= 1e-6 && min_p > 1e-3, "20 mixtures: max |integral - 1| " + fmt(worst_norm) +
                                                  " (<= 1e-6), min chi2 p over 40 sampler tests " + fmt(min_p) +
                                                  " (> 1e-3)"};
}

struct Comparison {
  double mean_ri = 0.0;
  int wins = 0;
  int losses = 0;
  double p = 1.0;
  int n = 0;
};

Comparison compare(const bench::SweepResult& r, bench::Method m, Index S) {
  Comparison c;
  std::vector<double> ri;
  for (const auto& row : r.metrics) {
    if (row.method != m || row.components != S || !row.ri_mse) continue;
    ri.push_back(*row.ri_mse);
    if (*row.ri_mse < 1.0) ++c.wins;
    if (*row.ri_mse > 1.0) ++c.losses;
  }
  c.n = static_cast<int>(ri.size());
  if (!ri.empty()) c.mean_ri = bench::mean(ri);
  c.p = bench::sign_test_p(c.wins, c.losses);
  return c;
}

std::string describe(const std::string& label, const Comparison& c) {
  return label + " mean RI " + fmt(c.mean_ri) + " (" + std::to_string(c.wins) + " wins / " +
         std::to_string(c.losses) + " losses over " + std::to_string(c.n) + " runs, sign p " + fmt(c.p) + ")";
}

bool favours(const Comparison& c, int runs) { return c.n == runs && c.mean_ri < 1.0 && c.p < 0.1; }

bench::SweepResult desk_sweep(const std::string& file, const fs::path& out) {
  const auto cfg = bench::load_config(fs::path(STATEMIX_CONFIG_DIR) / file);
  bench::SweepOptions options;
  options.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  options.model_dir = out / "models";
  fs::create_directories(out);
  auto r = bench::run_sweep(cfg, options);
  bench::write_metrics_csv(out / "metrics.csv", r.metrics);
  bench::write_summary_csv(out / "summary.csv", r.summary);
  for (const auto& f : r.failures) {
    std::cout << "  training/eval failure: " << bench::to_string(f.method) << " S=" << f.components << ": " << f.error
              << std::endl;
  }
  return r;
}

Outcome structure_tests() {
  std::vector<std::string> bad;
  const Index T = 100;
  const Index B = 20;
  for (Index b = 1; b <= B; ++b) {
    if (training::batch_prefix_length(b, B, T) != 5 * b) bad.push_back("prefix b=" + std::to_string(b));
  }

  const ssm::Lorenz96 model({.dim = 5});
  const auto traj = ssm::simulate(model, 6, 5);
  training::TrainConfig cfg;
  cfg.batches = 2;
  cfg.steps_per_batch = 3;
  cfg.iterations = 2;
  cfg.particles = 8;
  cfg.hidden = {8};
  cfg.seed = 3;
  struct Observer : training::TrainObserver {
    void on_step(const training::StepRecord& r) override { steps.push_back(r); }
    void on_update(training::Phase p, Index a, const nn::Network& n) override {
      results[{p, a}] = nn::parameter_hash(n);
    }
    std::vector<training::StepRecord> steps;
    std::map<std::pair<training::Phase, Index>, std::uint64_t> results;
  };
  Observer obs;
  const std::vector<Matrix> series{traj.observations};
  const auto m = training::statemixnn_train(series, model, cfg, &obs);
  const Index A = 2;
  const Index BJ = 6;
  if (m.filter_runs != 2 * A * BJ + BJ || static_cast<Index>(obs.steps.size()) != 2 * A * BJ + BJ) {
    bad.push_back("filter-run count");
  }
  for (const auto& r : obs.steps) {
    using training::Phase;
    if (r.key.phase == Phase::trans && r.static_hash != obs.results.at({Phase::prop, r.key.a})) {
      bad.push_back("trans step a=" + std::to_string(r.key.a) + " not conditioned on the new proposal");
    }
    if (r.key.phase == Phase::prop) {
      const auto prev = r.key.a == 1 ? obs.results.at({Phase::warmup, 0}) : obs.results.at({Phase::trans, r.key.a - 1});
      if (r.static_hash != prev) bad.push_back("prop step static hash");
    }
  }

  Rng rng{5};
  nn::Network f = nn::init_mixture_network(5, cfg.hidden, 1, 5, rng);
  nn::Network pi = nn::init_mixture_network(10, cfg.hidden, 1, 5, rng);
  const nn::Network f0 = f;
  auto adam = nn::make_adam(pi, cfg.adam);
  for (Index j = 1; j <= 4; ++j) {
    training::update_step(pi, adam, training::Partner::network(f), training::Role::learn_proposal, traj.observations,
                          model, cfg, {training::Phase::prop, 1, 1, j});
  }
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    if (!(f.layers[l].weight == f0.layers[l].weight) || !(f.layers[l].bias == f0.layers[l].bias)) {
      bad.push_back("static network changed");
    }
  }
  Observer single;
  training::conditional_update(pi, training::Partner::network(f), training::Role::learn_proposal, series, model, cfg,
                               training::Phase::prop, 1, &single);
  if (static_cast<Index>(single.steps.size()) != BJ) bad.push_back("conditional update ran " + std::to_string(single.steps.size()));
  std::string detail = "prefixes, alternation indices, static bit-exactness, 2ABJ+BJ = " +
                       std::to_string(m.filter_runs) + " runs";
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative paths and contents of every regular file below dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

Outcome reproducibility(const fs::path& root) {
  const std::string cli = STATEMIX_CLI;
  const std::string desk = std::string(STATEMIX_CONFIG_DIR) + "/fig1_desk.toml";
  std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "--config " + desk + " --seed 7 simulate"},
      {"train", "--config " + desk + " train"},
      {"evaluate", "--config " + desk + " evaluate --checkpoint " + (root / "a_train/model.json").string() +
                       " --series " + (root / "a_simulate/trajectory.csv").string()},
      {"sweep", "--config " + desk + " --threads 2 sweep"},
      {"gradcheck", "gradcheck"},
  };
  fs::create_directories(root);
  std::vector<std::string> differing;
  Index files = 0;
  Index csv_files = 0;
  for (const auto& [name, args] : commands) {
    for (const std::string side : {"a_", "b_"}) {
      const fs::path out = root / (side + name);
      fs::remove_all(out);
      const std::string cmd = cli + " --quiet --out " + out.string() + " " + args + " > " + (root / (side + name + ".json")).string();
      if (std::system(cmd.c_str()) != 0) return {false, name + " exited nonzero"};
    }
    const auto a = tree(root / ("a_" + name));
    const auto b = tree(root / ("b_" + name));
    if (a != b) differing.push_back(name);
    files += static_cast<Index>(a.size());
    for (const auto& [path, _] : a) csv_files += path.ends_with(".csv") ? 1 : 0;
    std::string out_a = slurp(root / ("a_" + name + ".json"));
    const std::string dir_a = (root / ("a_" + name)).string();
    const std::string dir_b = (root / ("b_" + name)).string();
    for (auto pos = out_a.find(dir_a); pos != std::string::npos; pos = out_a.find(dir_a, pos + dir_b.size())) {
      out_a.replace(pos, dir_a.size(), dir_b);
    }
    if (out_a != slurp(root / ("b_" + name + ".json"))) differing.push_back(name + " stdout");
  }
  std::string detail = "5 commands rerun, " + std::to_string(files) + " output files (" + std::to_string(csv_files) +
                       " CSV) compared byte for byte";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "statemix_acceptance";
  fs::create_directories(root);
  std::cout << "outputs under " << root << std::endl;

  run(1, "gradient suite", gradient_suite);
  run(2, "forward-pass equivalence", forward_equivalence);
  run(3, "bootstrap cancellation", bootstrap_cancellation);
  run(4, "Kalman oracle", kalman_oracle);
  run(5, "mixture correctness", mixture_correctness);

  std::optional<bench::SweepResult> lorenz;
  std::string lorenz_error;
  const auto start = std::chrono::steady_clock::now();
  try {
    lorenz = desk_sweep("lorenz96_desk.toml", root / "lorenz96_desk");
  } catch (const std::exception& e) {
    lorenz_error = e.what();
  }
  const double sweep_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "  lorenz96 desk sweep took " << fmt(sweep_s) << " s" << std::endl;
  const int runs = 20;

  run(6, "desk-scale Lorenz 96", [&]() -> Outcome {
    if (!lorenz) return {false, "sweep failed: " + lorenz_error};
    const auto s1 = compare(*lorenz, bench::Method::statemixnn, 1);
    const auto s6 = compare(*lorenz, bench::Method::statemixnn, 6);
    return {favours(s1, runs) && favours(s6, runs),
            describe("StateMixNN S=1", s1) + "; " + describe("S=6", s6) + "; need mean < 1 and p < 0.1"};
  });
  run(7, "desk-scale Kuramoto", [&]() -> Outcome {
    const auto r = desk_sweep("kuramoto_desk.toml", root / "kuramoto_desk");
    const auto s1 = compare(r, bench::Method::statemixnn, 1);
    return {favours(s1, runs), describe("StateMixNN S=1", s1) + "; need mean < 1 and p < 0.1"};
  });
  run(8, "PropMixNN baseline", [&]() -> Outcome {
    if (!lorenz) return {false, "sweep failed: " + lorenz_error};
    bool pass = true;
    std::string detail;
    for (Index S : {1, 6}) {
      const auto p = compare(*lorenz, bench::Method::propmixnn, S);
      const auto s = compare(*lorenz, bench::Method::statemixnn, S);
      const double ratio = s.mean_ri / p.mean_ri;
      pass = pass && p.n == runs && s.n == runs && p.mean_ri < 1.0 && ratio <= 1.5 && ratio >= 1.0 / 1.5;
      detail += (S == 1 ? "" : "; ") + std::string("S=") + std::to_string(S) + ": PropMixNN mean RI " +
                fmt(p.mean_ri) + ", StateMixNN/PropMixNN " + fmt(ratio);
    }
    return {pass, detail + "; need PropMixNN < 1 and ratio within [1/1.5, 1.5]"};
  });
  run(9, "telescoping and structure", structure_tests);
  run(10, "reproducibility", [&] { return reproducibility(root / "repro"); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
