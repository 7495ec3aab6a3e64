#include "statemix/bench/sweep.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "statemix/bench/metrics.hpp"
#include "statemix/common/format.hpp"
#include "statemix/ssm/trajectory.hpp"
#include "statemix/training/kernels.hpp"

namespace statemix::bench {

filter::FilterResult run_setup(const FilterSetup& setup, const ssm::StateSpaceModel& model, const Matrix& observations,
                               Index particles, Rng& rng) {
  ad::Tape tape;
  const Index dx = model.state_dim();
  std::unique_ptr<filter::Transition> f;
  if (setup.transition) {
    f = std::make_unique<training::NetworkTransition>(nn::bind(tape, *setup.transition, false),
                                                      setup.transition_components, dx, setup.sampler);
  } else {
    f = model.transition();
  }
  std::unique_ptr<filter::Proposal> pi;
  if (setup.proposal) {
    pi = std::make_unique<training::NetworkProposal>(nn::bind(tape, *setup.proposal, false),
                                                     setup.proposal_components, dx, setup.sampler);
  }
  const auto g = model.observation();
  filter::FilterOptions options;
  options.particles = particles;
  options.keep_ensembles = false;
  const Matrix x0 = model.initial_particles(rng, particles);
  return filter::run_filter(tape, x0, observations, *f, pi.get(), *g, rng, options);
}

void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
  const int workers = static_cast<int>(std::max<Index>(1, std::min<Index>(threads, count)));
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t eval_series_seed(std::uint64_t seed, Index cell, Index run) {
  return stream_seed(seed, {stream::eval_series, static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(run)});
}

std::uint64_t train_series_seed(std::uint64_t seed, Index cell, Index index) {
  return stream_seed(seed, {stream::train_series, static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(index)});
}

namespace {

std::uint64_t method_key(const MethodSpec& m) {
  return static_cast<std::uint64_t>(m.method) * 1000 + static_cast<std::uint64_t>(m.components);
}

bool learned(Method m) { return m == Method::statemixnn || m == Method::propmixnn; }

std::vector<MethodSpec> unique_methods(const std::vector<MethodSpec>& methods) {
  std::vector<MethodSpec> out;
  for (const auto& m : methods) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

struct Trained {
  MethodSpec spec;
  std::optional<training::LearnedModel> model;
  std::string error;
};

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  const auto& sweep = config.sweep;
  if (sweep.values.empty()) throw ConfigError("sweep needs at least one value");
  if (sweep.runs < 1) throw ConfigError("sweep needs at least one run");
  if (sweep.methods.empty()) throw ConfigError("sweep needs at least one method");
  const std::vector<MethodSpec> methods = unique_methods(sweep.methods);
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };

  SweepResult result;
  for (Index cell = 0; cell < static_cast<Index>(sweep.values.size()); ++cell) {
    const double value = sweep.values[static_cast<std::size_t>(cell)];
    const ExperimentConfig cfg = with_swept_value(config, value);
    const auto model = make_model(cfg);

    std::vector<Matrix> train_obs;
    for (Index i = 0; i < cfg.train_series; ++i) {
      train_obs.push_back(ssm::simulate(*model, cfg.length, train_series_seed(cfg.seed, cell, i)).observations);
    }

    std::vector<Trained> trained;
    for (const auto& m : methods) {
      if (learned(m.method)) trained.push_back({m, std::nullopt, {}});
    }
    parallel_for(static_cast<Index>(trained.size()), options.threads, [&](Index i) {
      auto& t = trained[static_cast<std::size_t>(i)];
      training::TrainConfig tc = cfg.training;
      tc.particles = cfg.particles;
      tc.transition_components = t.spec.components;
      tc.proposal_components = t.spec.components;
      tc.seed = stream_seed(cfg.seed, {stream::update, static_cast<std::uint64_t>(cell), method_key(t.spec)});
      tc.record_wall_time = options.record_wall_time;
      const std::string label = to_string(t.spec.method) + "_S" + std::to_string(t.spec.components);
      try {
        t.model = t.spec.method == Method::statemixnn ? training::statemixnn_train(train_obs, *model, tc)
                                                      : training::propmixnn_train(train_obs, *model, tc);
        if (!options.model_dir.empty()) {
          const auto dir = options.model_dir / ("cell_" + std::to_string(cell));
          std::filesystem::create_directories(dir);
          nn::save_checkpoint(dir / (label + ".json"), t.model->checkpoint(*model));
          training::write_history_csv(dir / (label + "_history.csv"), t.model->history);
        }
      } catch (const std::exception& e) {
        t.error = e.what();
      }
    });
    for (const auto& t : trained) {
      if (!t.model) result.failures.push_back({value, t.spec.method, t.spec.components, std::nullopt, t.error});
    }
    for (const auto& m : methods) {
      if (m.method == Method::iapf) {
        result.failures.push_back({value, m.method, m.components, std::nullopt, "method not implemented"});
      }
    }

    std::vector<std::vector<MetricRow>> per_run(static_cast<std::size_t>(sweep.runs));
    std::vector<std::vector<CellFailure>> run_failures(static_cast<std::size_t>(sweep.runs));
    parallel_for(sweep.runs, options.threads, [&](Index run) {
      const auto traj = ssm::simulate(*model, cfg.length, eval_series_seed(cfg.seed, cell, run));
      const Matrix truth = traj.hidden();
      const std::uint64_t hash = ssm::series_hash(traj.observations);
      auto evaluate = [&](const MethodSpec& spec, const FilterSetup& setup) -> std::optional<MetricRow> {
        Rng rng = make_stream(cfg.seed, {stream::filter, static_cast<std::uint64_t>(cell),
                                         static_cast<std::uint64_t>(run), method_key(spec)});
        const auto start = std::chrono::steady_clock::now();
        try {
          const auto res = run_setup(setup, *model, traj.observations, cfg.particles, rng);
          MetricRow row;
          row.system = cfg.model.system;
          row.swept_key = sweep.key;
          row.swept_value = value;
          row.method = spec.method;
          row.components = spec.components;
          row.run = run;
          row.series_hash = hash;
          row.mse = compute_mse(res.means, truth, model->periodic());
          row.loglik = res.log_marginal;
          if (options.record_wall_time) {
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
          }
          return row;
        } catch (const std::exception& e) {
          run_failures[static_cast<std::size_t>(run)].push_back(
              {value, spec.method, spec.components, run, e.what()});
          return std::nullopt;
        }
      };
      const auto baseline = evaluate({Method::bpf, 0}, {});
      auto& rows = per_run[static_cast<std::size_t>(run)];
      for (const auto& m : methods) {
        std::optional<MetricRow> row;
        if (m.method == Method::bpf) {
          row = baseline;
        } else if (learned(m.method)) {
          const auto it = std::find_if(trained.begin(), trained.end(), [&](const Trained& t) { return t.spec == m; });
          if (!it->model) continue;
          FilterSetup setup;
          setup.transition = it->model->transition ? &*it->model->transition : nullptr;
          setup.proposal = &it->model->proposal;
          setup.transition_components = m.components;
          setup.proposal_components = m.components;
          setup.sampler = cfg.training.sampler;
          row = evaluate(m, setup);
        }
        if (!row) continue;
        if (baseline) row->ri_mse = relative_improvement(row->mse, baseline->mse);
        rows.push_back(*row);
      }
    });
    for (Index run = 0; run < sweep.runs; ++run) {
      for (auto& r : per_run[static_cast<std::size_t>(run)]) result.metrics.push_back(std::move(r));
      for (auto& f : run_failures[static_cast<std::size_t>(run)]) result.failures.push_back(std::move(f));
    }
    log(sweep.key + "=" + format_double(value) + " done");
  }
  result.summary = summarize(config, result.metrics);
  return result;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<MetricRow>& rows) {
  std::vector<SummaryRow> out;
  const auto methods = unique_methods(config.sweep.methods);
  for (double value : config.sweep.values) {
    for (const auto& m : methods) {
      SummaryRow s;
      s.system = config.model.system;
      s.swept_key = config.sweep.key;
      s.swept_value = value;
      s.method = m.method;
      s.components = m.components;
      std::vector<double> ri;
      for (const auto& r : rows) {
        if (r.swept_value == value && r.method == m.method && r.components == m.components && r.ri_mse) {
          ri.push_back(*r.ri_mse);
        }
      }
      s.n_runs = static_cast<Index>(ri.size());
      if (!ri.empty()) {
        s.ri_mse_mean = mean(ri);
        s.ri_mse_p2_5 = percentile(ri, 2.5);
        s.ri_mse_p97_5 = percentile(ri, 97.5);
      }
      out.push_back(s);
    }
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "system,swept_key,swept_value,method,S,run,series_hash,mse,ri_mse,loglik,wall_ms\n";
  for (const auto& r : rows) {
    out << r.system << ',' << r.swept_key << ',' << format_double(r.swept_value) << ',' << to_string(r.method) << ','
        << r.components << ',' << r.run << ',' << r.series_hash << ',' << format_double(r.mse) << ',' << opt(r.ri_mse)
        << ',' << format_double(r.loglik) << ',' << format_double(r.wall_ms) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "system,swept_key,swept_value,method,S,ri_mse_mean,ri_mse_p2_5,ri_mse_p97_5,n_runs\n";
  for (const auto& r : rows) {
    out << r.system << ',' << r.swept_key << ',' << format_double(r.swept_value) << ',' << to_string(r.method) << ','
        << r.components << ',' << opt(r.ri_mse_mean) << ',' << opt(r.ri_mse_p2_5) << ',' << opt(r.ri_mse_p97_5) << ','
        << r.n_runs << '\n';
  }
}

}  // namespace statemix::bench
