#include "statemix/neuralnet/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

namespace statemix::nn {
namespace {

namespace bai = boost::archive::iterators;
using ToBase64 = bai::base64_from_binary<bai::transform_width<std::string::const_iterator, 6, 8>>;
using FromBase64 = bai::transform_width<bai::binary_from_base64<std::string::const_iterator>, 8, 6>;

std::string base64_encode(const std::string& bytes) {
  std::string out(ToBase64(bytes.begin()), ToBase64(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(std::string text) {
  const auto pad = static_cast<std::size_t>(std::count(text.begin(), text.end(), '='));
  std::replace(text.begin(), text.end(), '=', 'A');
  std::string out(FromBase64(text.begin()), FromBase64(text.end()));
  out.erase(out.size() - std::min(pad, out.size()));
  return out;
}

nlohmann::json matrix_to_json(const std::string& name, const Matrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()},
          {"data", encode_doubles(m.data(), static_cast<std::size_t>(m.size()))}};
}

Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols) {
  if (j.at("rows").get<Index>() != rows || j.at("cols").get<Index>() != cols) {
    throw std::runtime_error("checkpoint: parameter " + j.at("name").get<std::string>() +
                             " does not match the declared architecture");
  }
  const auto values = decode_doubles(j.at("data").get<std::string>());
  if (values.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::runtime_error("checkpoint: parameter " + j.at("name").get<std::string>() + " has wrong length");
  }
  return Eigen::Map<const Matrix>(values.data(), rows, cols);
}

}  // namespace

std::string encode_doubles(const double* data, std::size_t count) {
  std::string bytes;
  bytes.reserve(count * 8);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
  }
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(const std::string& text) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw std::runtime_error("checkpoint: array byte length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + static_cast<std::size_t>(b)]))
              << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& l : net.layers) acts.push_back(to_string(l.activation));
  nlohmann::json params = nlohmann::json::array();
  const auto names = net.parameter_names();
  const auto ps = net.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) params.push_back(matrix_to_json(names[i], *ps[i]));
  return {{"dims", net.dims()}, {"activations", acts}, {"layout", "column_major"}, {"params", params}};
}

Network network_from_json(const nlohmann::json& j) {
  const auto dims = j.at("dims").get<std::vector<Index>>();
  const auto& acts = j.at("activations");
  const auto& params = j.at("params");
  if (dims.size() < 2 || acts.size() != dims.size() - 1 || params.size() != 2 * (dims.size() - 1)) {
    throw std::runtime_error("checkpoint: inconsistent network architecture");
  }
  Network net;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Layer layer;
    layer.weight = matrix_from_json(params[2 * (l - 1)], dims[l], dims[l - 1]);
    layer.bias = matrix_from_json(params[2 * (l - 1) + 1], dims[l], 1);
    layer.activation = activation_from_string(acts[l - 1].get<std::string>());
    net.layers.push_back(std::move(layer));
  }
  return net;
}

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  return {{"version", kCheckpointVersion},
          {"d_x", c.state_dim},
          {"d_y", c.obs_dim},
          {"S_f", c.transition_components},
          {"S_pi", c.proposal_components},
          {"transition", c.transition ? network_to_json(*c.transition) : nlohmann::json(nullptr)},
          {"proposal", c.proposal ? network_to_json(*c.proposal) : nlohmann::json(nullptr)},
          {"metadata", c.metadata}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.state_dim = j.at("d_x").get<Index>();
  c.obs_dim = j.at("d_y").get<Index>();
  c.transition_components = j.at("S_f").get<Index>();
  c.proposal_components = j.at("S_pi").get<Index>();
  if (!j.at("transition").is_null()) c.transition = network_from_json(j.at("transition"));
  if (!j.at("proposal").is_null()) c.proposal = network_from_json(j.at("proposal"));
  c.metadata = j.value("metadata", nlohmann::json::object());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(c).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace statemix::nn
