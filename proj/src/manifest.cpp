#include "volcal/manifest.hpp"

#include <algorithm>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"

namespace volcal {

namespace fs = std::filesystem;

namespace {

nlohmann::json digests_json(const std::vector<FileDigest>& d) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& f : d) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return a;
}

std::vector<FileDigest> digests_from(const nlohmann::json& a) {
  std::vector<FileDigest> out;
  for (const auto& e : a) out.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
  return {{"stage", m.stage},
          {"command", m.command},
          {"tool_version", m.tool_version},
          {"config", m.config},
          {"config_hash", m.config_hash},
          {"seeds", m.seeds},
          {"inputs", digests_json(m.inputs)},
          {"outputs", digests_json(m.outputs)},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"threads", m.threads},
          {"summary", m.summary}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config");
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seeds = j.at("seeds");
    m.inputs = digests_from(j.at("inputs"));
    m.outputs = digests_from(j.at("outputs"));
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.threads = j.at("threads").get<int>();
    m.summary = j.value("summary", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  fs::create_directories(dir);
  write_text_atomic(dir / kManifestName, to_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  const fs::path p = dir / kManifestName;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

std::vector<FileDigest> digest_files(const fs::path& base, const std::vector<fs::path>& relative) {
  std::vector<FileDigest> out;
  out.reserve(relative.size());
  for (const auto& r : relative) out.push_back({r.generic_string(), sha256_file(base / r)});
  return out;
}

std::string staleness(const fs::path& dir, const std::string& hash, const fs::path& input_base,
                      const std::vector<fs::path>& inputs) {
  if (!fs::exists(dir / kManifestName)) return "no manifest";
  RunManifest m;
  try {
    m = read_manifest(dir);
  } catch (const Error& e) {
    return std::string("unreadable manifest (") + e.what() + ")";
  }
  if (m.tool_version != kToolVersion) return "tool version changed";
  if (m.config_hash != hash) return "configuration changed";
  if (m.inputs.size() != inputs.size()) return "inputs changed";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const fs::path p = input_base / inputs[i];
    if (m.inputs[i].path != inputs[i].generic_string()) return "inputs changed";
    if (!fs::exists(p)) return "input " + inputs[i].generic_string() + " missing";
    if (sha256_file(p) != m.inputs[i].sha256) return "input " + inputs[i].generic_string() + " changed";
  }
  for (const auto& o : m.outputs) {
    const fs::path p = dir / o.path;
    if (!fs::exists(p)) return "output " + o.path + " missing";
    if (sha256_file(p) != o.sha256) return "output " + o.path + " modified";
  }
  return {};
}

}  // namespace volcal
