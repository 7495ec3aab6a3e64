#include "statemix/bench/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "statemix/common/format.hpp"

namespace statemix::bench {

std::string to_string(Method m) {
  switch (m) {
    case Method::bpf:
      return "BPF";
    case Method::statemixnn:
      return "StateMixNN";
    case Method::propmixnn:
      return "PropMixNN";
    case Method::iapf:
      return "IAPF";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "bpf") return Method::bpf;
  if (lower == "statemixnn") return Method::statemixnn;
  if (lower == "propmixnn") return Method::propmixnn;
  if (lower == "iapf") return Method::iapf;
  throw ConfigError("unknown method: " + s);
}

namespace {

void reject_unknown(const toml::table& t, const std::string& where, std::initializer_list<const char*> allowed) {
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : t) {
    if (!keys.count(std::string(k.str()))) throw ConfigError("unknown key '" + std::string(k.str()) + "' in " + where);
  }
}

double get_double(const toml::table& t, const char* key, double fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  if (auto v = node->value<double>()) return *v;
  throw ConfigError(std::string("expected a number for ") + key);
}

template <typename Int>
Int get_int(const toml::table& t, const char* key, Int fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  if (!node->is_integer()) throw ConfigError(std::string("expected an integer for ") + key);
  const auto v = node->value<std::int64_t>().value();
  if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
  return static_cast<Int>(v);
}

std::string get_string(const toml::table& t, const char* key, const std::string& fallback) {
  const auto* node = t.get(key);
  if (!node) return fallback;
  if (auto v = node->value<std::string>()) return *v;
  throw ConfigError(std::string("expected a string for ") + key);
}

const toml::table* sub(const toml::table& root, const char* key) {
  const auto* node = root.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string("[") + key + "] must be a table");
  return node->as_table();
}

// Float literal that TOML reads back as the same double.
std::string toml_float(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

bool integral_key(const std::string& key) { return key == "K" || key == "T" || key == "d_x"; }

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  reject_unknown(root, "top level", {"seed", "model", "series", "filter", "training", "sweep"});
  ExperimentConfig c;
  c.seed = get_int<std::uint64_t>(root, "seed", c.seed);

  if (const auto* m = sub(root, "model")) {
    c.model.system = get_string(*m, "system", c.model.system);
    if (c.model.system == "lorenz96") {
      reject_unknown(*m, "[model]", {"system", "dim", "forcing", "dt", "sigma_v", "sigma_r", "integrator"});
      auto& l = c.model.lorenz96;
      l.dim = get_int<Index>(*m, "dim", l.dim);
      l.forcing = get_double(*m, "forcing", l.forcing);
      l.dt = get_double(*m, "dt", l.dt);
      l.sigma_v = get_double(*m, "sigma_v", l.sigma_v);
      l.sigma_r = get_double(*m, "sigma_r", l.sigma_r);
      l.integrator = ssm::integrator_from_string(get_string(*m, "integrator", ssm::to_string(l.integrator)));
    } else if (c.model.system == "kuramoto") {
      reject_unknown(*m, "[model]",
                     {"system", "dim", "coupling", "dt", "sigma_v", "sigma_r", "omega_mean", "omega_std", "burn_in"});
      auto& k = c.model.kuramoto;
      k.dim = get_int<Index>(*m, "dim", k.dim);
      k.coupling = get_double(*m, "coupling", k.coupling);
      k.dt = get_double(*m, "dt", k.dt);
      k.sigma_v = get_double(*m, "sigma_v", k.sigma_v);
      k.sigma_r = get_double(*m, "sigma_r", k.sigma_r);
      k.omega_mean = get_double(*m, "omega_mean", k.omega_mean);
      k.omega_std = get_double(*m, "omega_std", k.omega_std);
      k.burn_in = get_int<int>(*m, "burn_in", k.burn_in);
    } else if (c.model.system == "linear_gaussian") {
      reject_unknown(*m, "[model]", {"system", "a", "q", "r", "m0", "p0"});
      auto& g = c.model.linear_gaussian;
      g.a = get_double(*m, "a", g.a);
      g.q = get_double(*m, "q", g.q);
      g.r = get_double(*m, "r", g.r);
      g.m0 = get_double(*m, "m0", g.m0);
      g.p0 = get_double(*m, "p0", g.p0);
    } else {
      throw ConfigError("unknown system: " + c.model.system);
    }
  }
  if (const auto* s = sub(root, "series")) {
    reject_unknown(*s, "[series]", {"length"});
    c.length = get_int<Index>(*s, "length", c.length);
  }
  if (const auto* f = sub(root, "filter")) {
    reject_unknown(*f, "[filter]", {"particles"});
    c.particles = get_int<Index>(*f, "particles", c.particles);
  }
  if (const auto* t = sub(root, "training")) {
    reject_unknown(*t, "[training]",
                   {"method", "batches", "steps_per_batch", "iterations", "transition_components",
                    "proposal_components", "hidden", "learning_rate", "clip_norm", "sampler", "train_series",
                    "max_underflow_fraction"});
    auto& tc = c.training;
    c.train_method = method_from_string(get_string(*t, "method", to_string(c.train_method)));
    tc.batches = get_int<Index>(*t, "batches", tc.batches);
    tc.steps_per_batch = get_int<Index>(*t, "steps_per_batch", tc.steps_per_batch);
    tc.iterations = get_int<Index>(*t, "iterations", tc.iterations);
    tc.transition_components = get_int<Index>(*t, "transition_components", tc.transition_components);
    tc.proposal_components = get_int<Index>(*t, "proposal_components", tc.proposal_components);
    if (const auto* h = t->get("hidden")) {
      if (!h->is_array()) throw ConfigError("hidden must be an array of integers");
      tc.hidden.clear();
      for (const auto& e : *h->as_array()) {
        if (!e.is_integer()) throw ConfigError("hidden must be an array of integers");
        tc.hidden.push_back(static_cast<Index>(e.value<std::int64_t>().value()));
      }
    }
    tc.adam.learning_rate = get_double(*t, "learning_rate", tc.adam.learning_rate);
    tc.clip_norm = get_double(*t, "clip_norm", tc.clip_norm);
    try {
      tc.sampler = dist::sampler_from_string(get_string(*t, "sampler", dist::to_string(tc.sampler)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    tc.max_underflow_fraction = get_double(*t, "max_underflow_fraction", tc.max_underflow_fraction);
    c.train_series = get_int<Index>(*t, "train_series", c.train_series);
  }
  if (const auto* w = sub(root, "sweep")) {
    reject_unknown(*w, "[sweep]", {"key", "values", "runs", "methods"});
    c.sweep.key = get_string(*w, "key", c.sweep.key);
    c.sweep.runs = get_int<Index>(*w, "runs", c.sweep.runs);
    if (const auto* v = w->get("values")) {
      if (!v->is_array()) throw ConfigError("sweep values must be an array");
      c.sweep.values.clear();
      for (const auto& e : *v->as_array()) {
        const auto d = e.value<double>();
        if (!d) throw ConfigError("sweep values must be numbers");
        c.sweep.values.push_back(*d);
      }
    }
    if (const auto* ms = w->get("methods")) {
      if (!ms->is_array()) throw ConfigError("sweep methods must be an array of tables");
      c.sweep.methods.clear();
      for (const auto& e : *ms->as_array()) {
        if (!e.is_table()) throw ConfigError("sweep methods must be an array of tables");
        const auto& mt = *e.as_table();
        reject_unknown(mt, "[[sweep.methods]]", {"name", "S"});
        MethodSpec spec;
        spec.method = method_from_string(get_string(mt, "name", ""));
        spec.components = get_int<Index>(mt, "S", spec.method == Method::bpf ? 0 : 1);
        if (spec.method == Method::bpf) spec.components = 0;
        c.sweep.methods.push_back(spec);
      }
    }
  }
  if (c.length < 1 || c.particles < 1 || c.train_series < 1) {
    throw ConfigError("series length, particles and train_series must be positive");
  }
  try {
    training::validate(c.training);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& m : c.sweep.methods) {
    if (m.method != Method::bpf && m.components < 1) throw ConfigError("method components must be positive");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "seed = " << c.seed << "\n\n[model]\nsystem = \"" << c.model.system << "\"\n";
  if (c.model.system == "lorenz96") {
    const auto& l = c.model.lorenz96;
    o << "dim = " << l.dim << "\nforcing = " << toml_float(l.forcing) << "\ndt = " << toml_float(l.dt)
      << "\nsigma_v = " << toml_float(l.sigma_v) << "\nsigma_r = " << toml_float(l.sigma_r) << "\nintegrator = \""
      << ssm::to_string(l.integrator) << "\"\n";
  } else if (c.model.system == "kuramoto") {
    const auto& k = c.model.kuramoto;
    o << "dim = " << k.dim << "\ncoupling = " << toml_float(k.coupling) << "\ndt = " << toml_float(k.dt)
      << "\nsigma_v = " << toml_float(k.sigma_v) << "\nsigma_r = " << toml_float(k.sigma_r)
      << "\nomega_mean = " << toml_float(k.omega_mean) << "\nomega_std = " << toml_float(k.omega_std)
      << "\nburn_in = " << k.burn_in << "\n";
  } else {
    const auto& g = c.model.linear_gaussian;
    o << "a = " << toml_float(g.a) << "\nq = " << toml_float(g.q) << "\nr = " << toml_float(g.r)
      << "\nm0 = " << toml_float(g.m0) << "\np0 = " << toml_float(g.p0) << "\n";
  }
  o << "\n[series]\nlength = " << c.length << "\n\n[filter]\nparticles = " << c.particles << "\n";
  const auto& t = c.training;
  o << "\n[training]\nmethod = \"" << to_string(c.train_method) << "\"\nbatches = " << t.batches
    << "\nsteps_per_batch = " << t.steps_per_batch << "\niterations = " << t.iterations
    << "\ntransition_components = " << t.transition_components
    << "\nproposal_components = " << t.proposal_components << "\nhidden = [";
  for (std::size_t i = 0; i < t.hidden.size(); ++i) o << (i ? ", " : "") << t.hidden[i];
  o << "]\nlearning_rate = " << toml_float(t.adam.learning_rate) << "\nclip_norm = " << toml_float(t.clip_norm)
    << "\nsampler = \"" << dist::to_string(t.sampler) << "\"\nmax_underflow_fraction = "
    << toml_float(t.max_underflow_fraction) << "\ntrain_series = " << c.train_series << "\n";
  o << "\n[sweep]\nkey = \"" << c.sweep.key << "\"\nvalues = [";
  for (std::size_t i = 0; i < c.sweep.values.size(); ++i) {
    const double v = c.sweep.values[i];
    o << (i ? ", " : "")
      << (integral_key(c.sweep.key) && v == std::floor(v) ? std::to_string(static_cast<long long>(v)) : toml_float(v));
  }
  o << "]\nruns = " << c.sweep.runs << "\nmethods = [";
  for (std::size_t i = 0; i < c.sweep.methods.size(); ++i) {
    const auto& m = c.sweep.methods[i];
    o << (i ? ", " : "") << "{ name = \"" << to_string(m.method) << "\"";
    if (m.method != Method::bpf) o << ", S = " << m.components;
    o << " }";
  }
  o << "]\n";
  return o.str();
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_toml(config);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_toml(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig with_swept_value(const ExperimentConfig& config, double value) {
  ExperimentConfig c = config;
  const auto& key = config.sweep.key;
  auto as_count = [&](const char* what) {
    if (value < 1 || value != std::floor(value)) throw ConfigError(std::string(what) + " values must be positive integers");
    return static_cast<Index>(value);
  };
  if (key == "K") {
    c.particles = as_count("K");
  } else if (key == "T") {
    c.length = as_count("T");
  } else if (key == "sigma_v") {
    if (!(value >= 0)) throw ConfigError("sigma_v values must be non-negative");
    if (c.model.system == "lorenz96") {
      c.model.lorenz96.sigma_v = value;
    } else if (c.model.system == "kuramoto") {
      c.model.kuramoto.sigma_v = value;
    } else {
      throw ConfigError("sigma_v sweep needs lorenz96 or kuramoto");
    }
  } else if (key == "d_x") {
    if (c.model.system == "lorenz96") {
      c.model.lorenz96.dim = as_count("d_x");
    } else if (c.model.system == "kuramoto") {
      c.model.kuramoto.dim = as_count("d_x");
    } else {
      throw ConfigError("d_x sweep needs lorenz96 or kuramoto");
    }
  } else {
    throw ConfigError("unknown sweep key: " + key);
  }
  return c;
}

std::unique_ptr<ssm::StateSpaceModel> make_model(const ExperimentConfig& config) {
  const auto& m = config.model;
  if (m.system == "lorenz96") return std::make_unique<ssm::Lorenz96>(m.lorenz96);
  if (m.system == "kuramoto") return std::make_unique<ssm::Kuramoto>(m.kuramoto, config.seed);
  if (m.system == "linear_gaussian") return std::make_unique<ssm::LinearGaussian>(m.linear_gaussian);
  throw ConfigError("unknown system: " + m.system);
}

}  // namespace statemix::bench
