#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace volcal {

inline constexpr const char* kToolVersion = "volcal 0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

struct FileDigest {
  std::string path;  // relative to the manifest's directory (outputs) or the tree root (inputs)
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

// Provenance record written into every artifact directory.
struct RunManifest {
  std::string stage;
  std::string command;
  std::string tool_version = kToolVersion;
  nlohmann::json config = nlohmann::json::object();
  std::string config_hash;
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  double wall_clock_seconds = 0.0;
  int threads = 1;
  nlohmann::json summary = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
// Throws MissingFileError when the directory has no manifest.
RunManifest read_manifest(const std::filesystem::path& dir);

// SHA-256 of the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

// Digests files under `base`; recorded paths are relative to it.
std::vector<FileDigest> digest_files(const std::filesystem::path& base,
                                     const std::vector<std::filesystem::path>& relative);

// Why a stage must (re)run; empty when the directory is up to date: a manifest
// exists, the config hash matches, every input digest matches the current
// file under `input_base`, and every recorded output still hashes the same.
std::string staleness(const std::filesystem::path& dir, const std::string& config_hash,
                      const std::filesystem::path& input_base,
                      const std::vector<std::filesystem::path>& inputs);

}  // namespace volcal
