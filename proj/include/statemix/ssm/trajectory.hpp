#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "statemix/common/format.hpp"
#include "statemix/ssm/models.hpp"

namespace statemix::ssm {

struct Trajectory {
  Matrix states;        // d_x x (T + 1), column t is x_t
  Matrix observations;  // d_y x T, column t - 1 is y_t
  std::uint64_t seed = 0;
  nlohmann::json model = nlohmann::json::object();

  Index length() const { return observations.cols(); }
  /// States x_{1:T}.
  Matrix hidden() const { return states.rightCols(length()); }
};

/// Draws x_0 (after any burn-in), then T transitions and observations from substreams of `seed`.
Trajectory simulate(const StateSpaceModel& model, Index T, std::uint64_t seed);

/// FNV-1a over the raw observation bytes.
std::uint64_t series_hash(const Matrix& observations);

/// CSV header `t,x_1..x_dx,y_1..y_dy`; the t = 0 row leaves the y fields empty.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// JSON sidecar holding the model descriptor, seed and length.
void write_trajectory_sidecar(const std::filesystem::path& path, const Trajectory& traj);

}  // namespace statemix::ssm
