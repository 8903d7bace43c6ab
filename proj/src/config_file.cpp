#include "volcal/config_file.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"

namespace volcal {

std::string ConfigValue::type_name() const {
  switch (v_.index()) {
    case 0: return "bool";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "string";
    default: return "array";
  }
}

nlohmann::json ConfigValue::to_json() const {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Array>) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& e : v) a.push_back(e.to_json());
          return a;
        } else {
          return v;
        }
      },
      v_);
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::string_view origin) : s_(text), origin_(origin) {}

  void run(ConfigFile& out) {
    std::string section;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++i_;
        skip_spaces();
        section = ident("section name");
        while (!eof() && peek() == '.') {
          ++i_;
          section += "." + ident("section name");
        }
        skip_spaces();
        expect(']');
        end_of_line();
        continue;
      }
      const int key_line = line_;
      const std::string key = ident("key");
      skip_spaces();
      expect('=');
      skip_spaces();
      ConfigValue v = value();
      end_of_line();
      if (out.has(section, key)) {
        line_ = key_line;
        fail("duplicate key '" + key + "'");
      }
      out.set(section, key, std::move(v));
    }
  }

 private:
  bool eof() const { return i_ >= s_.size(); }
  char peek() const { return s_[i_]; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(std::string(origin_) + ":" + std::to_string(line_) + ": " + what);
  }

  void expect(char c) {
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++i_;
  }

  void skip_comment() {
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') ++i_;
    }
  }

  void newline() {
    ++i_;
    ++line_;
  }

  void skip_blank_lines() {
    while (true) {
      skip_spaces();
      skip_comment();
      if (!eof() && peek() == '\n') {
        newline();
        continue;
      }
      return;
    }
  }

  // Whitespace, comments and newlines (inside arrays).
  void skip_all() {
    while (true) {
      skip_spaces();
      skip_comment();
      if (!eof() && peek() == '\n') {
        newline();
      } else {
        return;
      }
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    newline();
  }

  std::string ident(const char* what) {
    const std::size_t start = i_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++i_;
    if (i_ == start) fail(std::string("expected ") + what);
    return std::string(s_.substr(start, i_ - start));
  }

  ConfigValue value() {
    if (eof()) fail("missing value");
    const char c = peek();
    if (c == '"') return ConfigValue(string());
    if (c == '[') return ConfigValue(array());
    if (s_.substr(i_, 4) == "true") {
      i_ += 4;
      return ConfigValue(true);
    }
    if (s_.substr(i_, 5) == "false") {
      i_ += 5;
      return ConfigValue(false);
    }
    return number();
  }

  std::string string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[i_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      const char e = s_[i_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail(std::string("unknown escape \\") + e);
      }
    }
  }

  ConfigValue::Array array() {
    expect('[');
    ConfigValue::Array out;
    while (true) {
      skip_all();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++i_;
        return out;
      }
      out.push_back(value());
      skip_all();
      if (!eof() && peek() == ',') {
        ++i_;
        continue;
      }
      skip_all();
      expect(']');
      return out;
    }
  }

  ConfigValue number() {
    const std::size_t start = i_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_')) {
      ++i_;
    }
    std::string tok;
    for (char ch : s_.substr(start, i_ - start)) {
      if (ch != '_') tok += ch;
    }
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan";
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    if (!is_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b + (*b == '+'), e, v);
      if (ec == std::errc() && p == e) return ConfigValue(v);
      fail("bad integer '" + tok + "'");
    }
    double d = 0.0;
    auto [p, ec] = std::from_chars(b + (*b == '+'), e, d);
    if (ec != std::errc() || p != e || !std::isfinite(d)) fail("bad number '" + tok + "'");
    return ConfigValue(d);
  }

  std::string_view s_;
  std::string_view origin_;
  std::size_t i_ = 0;
  int line_ = 1;
};

[[noreturn]] void type_error(std::string_view section, std::string_view key, const ConfigValue& v,
                             const char* want) {
  throw ConfigError("config key [" + std::string(section) + "] " + std::string(key) + " must be " +
                    want + ", got " + v.type_name());
}

double as_double(std::string_view section, std::string_view key, const ConfigValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v.storage())) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v.storage())) return *d;
  type_error(section, key, v, "a number");
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, std::string_view origin) {
  ConfigFile f;
  f.origin_ = origin;
  Parser(text, origin).run(f);
  return f;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

const ConfigValue* ConfigFile::find(std::string_view section, std::string_view key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool ConfigFile::has(std::string_view section, std::string_view key) const {
  return find(section, key) != nullptr;
}

void ConfigFile::set(std::string section, std::string key, ConfigValue value) {
  sections_[std::move(section)][std::move(key)] = std::move(value);
}

std::int64_t ConfigFile::get_int(std::string_view section, std::string_view key,
                                 std::int64_t fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(&v->storage())) return *i;
  type_error(section, key, *v, "an integer");
}

std::uint64_t ConfigFile::get_uint(std::string_view section, std::string_view key,
                                   std::uint64_t fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  const auto i = get_int(section, key, 0);
  if (i < 0) throw ConfigError("config key [" + std::string(section) + "] " + std::string(key) + " must be >= 0");
  return static_cast<std::uint64_t>(i);
}

double ConfigFile::get_double(std::string_view section, std::string_view key, double fallback) const {
  const auto* v = find(section, key);
  return v ? as_double(section, key, *v) : fallback;
}

bool ConfigFile::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  if (const auto* b = std::get_if<bool>(&v->storage())) return *b;
  type_error(section, key, *v, "true or false");
}

std::string ConfigFile::get_string(std::string_view section, std::string_view key,
                                   std::string fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  if (const auto* s = std::get_if<std::string>(&v->storage())) return *s;
  type_error(section, key, *v, "a string");
}

std::vector<double> ConfigFile::get_doubles(std::string_view section, std::string_view key,
                                            std::vector<double> fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  const auto* a = std::get_if<ConfigValue::Array>(&v->storage());
  if (!a) type_error(section, key, *v, "an array of numbers");
  std::vector<double> out;
  for (const auto& e : *a) out.push_back(as_double(section, key, e));
  return out;
}

std::vector<std::int64_t> ConfigFile::get_ints(std::string_view section, std::string_view key,
                                               std::vector<std::int64_t> fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  const auto* a = std::get_if<ConfigValue::Array>(&v->storage());
  if (!a) type_error(section, key, *v, "an array of integers");
  std::vector<std::int64_t> out;
  for (const auto& e : *a) {
    const auto* i = std::get_if<std::int64_t>(&e.storage());
    if (!i) type_error(section, key, e, "an integer");
    out.push_back(*i);
  }
  return out;
}

std::vector<std::string> ConfigFile::get_strings(std::string_view section, std::string_view key,
                                                 std::vector<std::string> fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  const auto* a = std::get_if<ConfigValue::Array>(&v->storage());
  if (!a) type_error(section, key, *v, "an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *a) {
    const auto* s = std::get_if<std::string>(&e.storage());
    if (!s) type_error(section, key, e, "a string");
    out.push_back(*s);
  }
  return out;
}

void ConfigFile::check_keys(const std::map<std::string, std::vector<std::string>>& allowed) const {
  for (const auto& [section, keys] : sections_) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) throw ConfigError(origin_ + ": unknown section [" + section + "]");
    for (const auto& [key, _] : keys) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw ConfigError(origin_ + ": unknown key '" + key + "' in section [" + section + "]");
      }
    }
  }
}

nlohmann::json ConfigFile::section_json(std::string_view section) const {
  nlohmann::json j = nlohmann::json::object();
  const auto s = sections_.find(section);
  if (s == sections_.end()) return j;
  for (const auto& [k, v] : s->second) j[k] = v.to_json();
  return j;
}

nlohmann::json ConfigFile::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, _] : sections_) j[name] = section_json(name);
  return j;
}

}  // namespace volcal
