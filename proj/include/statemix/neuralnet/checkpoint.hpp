#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "statemix/neuralnet/network.hpp"

namespace statemix::nn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Index state_dim = 0;
  Index obs_dim = 0;
  Index transition_components = 0;
  Index proposal_components = 0;
  std::optional<Network> transition;
  std::optional<Network> proposal;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Little-endian float64 bytes, base64 encoded.
std::string encode_doubles(const double* data, std::size_t count);
std::vector<double> decode_doubles(const std::string& text);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace statemix::nn
