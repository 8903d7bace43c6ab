#include "volcal/net/weights_io.hpp"

#include <cstring>
#include <json.hpp>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"

namespace volcal::net {

namespace fs = std::filesystem;
using nlohmann::json;

void save_model(const fs::path& dir, const NetworkConfig& config, const NetworkWeights& weights) {
  check_weights(config, weights);
  json manifest;
  manifest["config"] = to_json(config);
  manifest["dtype"] = "f32";
  manifest["endian"] = "little";
  manifest["payload"] = "weights.f32";
  std::string payload;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& t : weights.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.size()}});
    payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    offset += t.size();
  }
  manifest["tensors"] = tensors;
  manifest["parameter_count"] = offset;
  write_file_atomic(dir / "weights.f32", std::span<const char>(payload.data(), payload.size()));
  write_text_atomic(dir / "weights.json", manifest.dump(2) + "\n");
}

SavedModel load_model(const fs::path& dir) {
  const std::string text = read_file(dir / "weights.json");
  SavedModel m;
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("malformed weights.json in " + dir.string() + ": " + e.what());
  }
  m.config = config_from_json(manifest.at("config"));
  if (manifest.value("dtype", std::string("f32")) != "f32") {
    throw UnknownDtypeError("weights dtype must be f32");
  }
  const std::string payload = read_file(dir / manifest.value("payload", std::string("weights.f32")));
  std::size_t total = 0;
  for (const auto& t : manifest.at("tensors")) total += t.at("count").get<std::size_t>();
  if (payload.size() != total * sizeof(float)) {
    throw SizeMismatchError("weights payload has " + std::to_string(payload.size()) +
                            " bytes, manifest implies " + std::to_string(total * sizeof(float)));
  }
  for (const auto& t : manifest.at("tensors")) {
    NamedTensor nt;
    nt.name = t.at("name").get<std::string>();
    nt.shape = t.at("shape").get<std::vector<int>>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    if (count != nt.size() || offset + count > total) {
      throw FormatError("tensor '" + nt.name + "' has inconsistent shape/offset");
    }
    nt.data.resize(count);
    std::memcpy(nt.data.data(), payload.data() + offset * sizeof(float), count * sizeof(float));
    m.weights.tensors.push_back(std::move(nt));
  }
  check_weights(m.config, m.weights);
  return m;
}

}  // namespace volcal::net
