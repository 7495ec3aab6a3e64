#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "statemix/ssm/models.hpp"
#include "statemix/training/trainer.hpp"

namespace statemix::bench {

using ad::Index;
using ad::Matrix;

enum class Method { bpf, statemixnn, propmixnn, iapf };
std::string to_string(Method m);
/// Accepts the display names ("BPF", "StateMixNN", ...) case-insensitively.
Method method_from_string(const std::string& s);

struct MethodSpec {
  Method method = Method::bpf;
  Index components = 1;  // S; ignored by BPF
  bool operator==(const MethodSpec&) const = default;
};

struct ModelSpec {
  std::string system = "lorenz96";  // lorenz96 | kuramoto | linear_gaussian
  ssm::Lorenz96Config lorenz96{};
  ssm::KuramotoConfig kuramoto{};
  ssm::LinearGaussianConfig linear_gaussian{};
};

struct SweepSettings {
  std::string key = "K";  // K | T | sigma_v | d_x
  std::vector<double> values;
  Index runs = 200;
  std::vector<MethodSpec> methods{{Method::bpf, 0}};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSpec model;
  Index length = 100;  // T
  Index particles = 100;
  Method train_method = Method::statemixnn;
  training::TrainConfig training;
  Index train_series = 1;
  SweepSettings sweep;
};

/// Raised for malformed or inconsistent configuration files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_toml(const ExperimentConfig& config);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// FNV-1a of the canonical TOML text.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Copy of `config` with the swept key set to `value`.
ExperimentConfig with_swept_value(const ExperimentConfig& config, double value);

/// Model instance; Kuramoto frequencies come from `config.seed`.
std::unique_ptr<ssm::StateSpaceModel> make_model(const ExperimentConfig& config);

}  // namespace statemix::bench
