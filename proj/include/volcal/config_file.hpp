#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace volcal {

// A TOML subset: `[section]` headers, `key = value` lines and `#` comments.
// Values are strings ("..." with \" \\ \n \t escapes), integers, floats,
// true/false, and arrays of those in brackets (may span lines, trailing
// comma allowed). Keys before the first header belong to section "".
class ConfigValue {
 public:
  using Array = std::vector<ConfigValue>;
  using Storage = std::variant<bool, std::int64_t, double, std::string, Array>;

  ConfigValue() = default;
  explicit ConfigValue(Storage v) : v_(std::move(v)) {}

  const Storage& storage() const { return v_; }
  bool is_array() const { return std::holds_alternative<Array>(v_); }
  std::string type_name() const;

  nlohmann::json to_json() const;

 private:
  Storage v_{false};
};

class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text, std::string_view origin = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(std::string_view section, std::string_view key) const;
  const ConfigValue* find(std::string_view section, std::string_view key) const;

  // Typed lookups; a missing key yields the fallback, a wrong type throws ConfigError.
  std::int64_t get_int(std::string_view section, std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view section, std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;
  std::string get_string(std::string_view section, std::string_view key, std::string fallback) const;
  std::vector<double> get_doubles(std::string_view section, std::string_view key,
                                  std::vector<double> fallback) const;
  std::vector<std::int64_t> get_ints(std::string_view section, std::string_view key,
                                     std::vector<std::int64_t> fallback) const;
  std::vector<std::string> get_strings(std::string_view section, std::string_view key,
                                       std::vector<std::string> fallback) const;

  void set(std::string section, std::string key, ConfigValue value);

  // Rejects sections or keys outside `allowed` (catches typos).
  void check_keys(const std::map<std::string, std::vector<std::string>>& allowed) const;

  // Canonical form (sorted sections and keys) used for hashing.
  nlohmann::json to_json() const;
  nlohmann::json section_json(std::string_view section) const;

 private:
  std::string origin_;
  std::map<std::string, std::map<std::string, ConfigValue, std::less<>>, std::less<>> sections_;
};

}  // namespace volcal
