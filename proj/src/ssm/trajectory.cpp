#include "statemix/ssm/trajectory.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace statemix::ssm {

Trajectory simulate(const StateSpaceModel& model, Index T, std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("simulate: T must be at least 1");
  const Index d = model.state_dim();
  Rng start_rng = make_stream(seed, {stream::init});
  Rng noise_rng = make_stream(seed, {stream::model});
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory traj;
  traj.seed = seed;
  traj.model = model.describe();
  traj.states.resize(d, T + 1);
  traj.observations.resize(d, T);
  traj.states.col(0) = model.simulation_start(start_rng);
  const Vector obs_sd = model.observation_stddev();
  Vector eps(d);
  for (Index t = 1; t <= T; ++t) {
    for (Index i = 0; i < d; ++i) eps(i) = normal(noise_rng);
    traj.states.col(t) = model.transition_sample(traj.states.col(t - 1), eps);
    for (Index i = 0; i < d; ++i) eps(i) = normal(noise_rng);
    traj.observations.col(t - 1) = traj.states.col(t) + obs_sd.cwiseProduct(eps);
  }
  return traj;
}

std::uint64_t series_hash(const Matrix& observations) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(observations.rows()));
  mix(static_cast<std::uint64_t>(observations.cols()));
  for (Index i = 0; i < observations.size(); ++i) mix(std::bit_cast<std::uint64_t>(observations.data()[i]));
  return h;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const Index dx = traj.states.rows();
  const Index dy = traj.observations.rows();
  out << "t";
  for (Index i = 1; i <= dx; ++i) out << ",x_" << i;
  for (Index i = 1; i <= dy; ++i) out << ",y_" << i;
  out << '\n';
  for (Index t = 0; t < traj.states.cols(); ++t) {
    out << t;
    for (Index i = 0; i < dx; ++i) out << ',' << format_double(traj.states(i, t));
    for (Index i = 0; i < dy; ++i) {
      out << ',';
      if (t > 0) out << format_double(traj.observations(i, t - 1));
    }
    out << '\n';
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  Index dx = 0;
  Index dy = 0;
  {
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) {
      if (field.rfind("x_", 0) == 0) ++dx;
      if (field.rfind("y_", 0) == 0) ++dy;
    }
  }
  if (dx == 0) throw std::runtime_error(path.string() + ": no state columns");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (static_cast<Index>(fields.size()) != 1 + dx + dy) {
      throw std::runtime_error(path.string() + ": malformed row " + std::to_string(rows.size() + 1));
    }
    rows.push_back(std::move(fields));
  }
  if (rows.size() < 2) throw std::runtime_error(path.string() + ": trajectory needs at least one observation");
  auto parse = [&](const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{}) throw std::runtime_error(path.string() + ": bad number '" + s + "'");
    return v;
  };
  Trajectory traj;
  const auto n = static_cast<Index>(rows.size());
  traj.states.resize(dx, n);
  traj.observations.resize(dy, n - 1);
  for (Index t = 0; t < n; ++t) {
    const auto& f = rows[static_cast<std::size_t>(t)];
    for (Index i = 0; i < dx; ++i) traj.states(i, t) = parse(f[static_cast<std::size_t>(1 + i)]);
    if (t > 0) {
      for (Index i = 0; i < dy; ++i) traj.observations(i, t - 1) = parse(f[static_cast<std::size_t>(1 + dx + i)]);
    }
  }
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream js(sidecar);
    const auto j = nlohmann::json::parse(js);
    traj.seed = j.value("seed", std::uint64_t{0});
    traj.model = j.value("model", nlohmann::json::object());
  }
  return traj;
}

void write_trajectory_sidecar(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const nlohmann::json j = {{"model", traj.model},
                            {"seed", traj.seed},
                            {"T", traj.length()},
                            {"series_hash", series_hash(traj.observations)}};
  out << j.dump(1) << '\n';
}

}  // namespace statemix::ssm
