#include "volcal/net/config.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "volcal/error.hpp"

namespace volcal::net {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "default";
    case Variant::drop_last: return "drop_last";
    case Variant::drop_all: return "drop_all";
    case Variant::hetero: return "hetero";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::standard, Variant::drop_last, Variant::drop_all, Variant::hetero}) {
    if (to_string(v) == s) return v;
  }
  throw ParameterError("unknown variant '" + std::string(s) +
                       "' (expected default|drop_last|drop_all|hetero)");
}

std::string_view to_string(Architecture a) {
  return a == Architecture::highres ? "highres" : "shallow";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "highres") return Architecture::highres;
  if (s == "shallow") return Architecture::shallow;
  throw ParameterError("unknown architecture '" + std::string(s) + "'");
}

void NetworkConfig::validate() const {
  for (int f : filters) {
    if (f < 1) throw ConfigError("filters must all be >= 1");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0) || !(input_dropout_p >= 0.0 && input_dropout_p < 1.0)) {
    throw ConfigError("dropout probabilities must be in [0, 1)");
  }
  if (hetero_seg_filters < 1 || hetero_sigma_filters < 1) {
    throw ConfigError("hetero head filter counts must be >= 1");
  }
  if (num_classes != 2) throw ConfigError("only binary (num_classes = 2) networks are supported");
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (hetero_noise_samples < 1) throw ConfigError("hetero_noise_samples must be >= 1");
}

nlohmann::json to_json(const NetworkConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"architecture", to_string(c.architecture)},
      {"filters", c.filters},
      {"dropout_p", c.dropout_p},
      {"input_dropout_p", c.input_dropout_p},
      {"hetero_seg_filters", c.hetero_seg_filters},
      {"hetero_sigma_filters", c.hetero_sigma_filters},
      {"num_classes", c.num_classes},
      {"input_channels", c.input_channels},
      {"hetero_noise_samples", c.hetero_noise_samples},
      {"rng_seed", c.rng_seed},
  };
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.architecture = parse_architecture(j.value("architecture", std::string("highres")));
    c.filters = j.at("filters").get<std::array<int, 5>>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.input_dropout_p = j.at("input_dropout_p").get<double>();
    c.hetero_seg_filters = j.at("hetero_seg_filters").get<int>();
    c.hetero_sigma_filters = j.at("hetero_sigma_filters").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.hetero_noise_samples = j.value("hetero_noise_samples", 10);
    c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad network config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t NamedTensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

const NamedTensor& NetworkWeights::at(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConfigError("no weight tensor named '" + std::string(name) + "'");
}

std::size_t NetworkWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

namespace {

void add_conv(std::vector<ParamSpec>& out, const std::string& name, int k, int cin, int cout) {
  out.push_back({name + "/kernel", {k, k, k, cin, cout}, k * k * k * cin, false});
  out.push_back({name + "/bias", {cout}, k * k * k * cin, true});
}

}  // namespace

std::vector<ParamSpec> parameter_layout(const NetworkConfig& c) {
  std::vector<ParamSpec> out;
  const auto& f = c.filters;
  int trunk_out = f[0];
  add_conv(out, "conv0", 3, c.input_channels, f[0]);
  if (c.architecture == Architecture::highres) {
    int cin = f[0];
    for (int b = 0; b < 3; ++b) {
      const std::string name = "block" + std::to_string(b + 1);
      const int cout = f[b + 1];
      add_conv(out, name + "/conv_a", 3, cin, cout);
      add_conv(out, name + "/conv_b", 3, cout, cout);
      if (cin != cout) add_conv(out, name + "/proj", 1, cin, cout);
      cin = cout;
    }
    add_conv(out, "conv4", 3, cin, f[4]);
    trunk_out = f[4];
  }
  if (c.has_sigma_head() && c.architecture == Architecture::highres) {
    add_conv(out, "seg_head", 3, trunk_out, c.hetero_seg_filters);
    add_conv(out, "classifier", 1, c.hetero_seg_filters, c.num_classes);
    add_conv(out, "sigma_head", 3, trunk_out, c.hetero_sigma_filters);
    add_conv(out, "sigma_out", 1, c.hetero_sigma_filters, 1);
  } else {
    add_conv(out, "classifier", 1, trunk_out, c.num_classes);
    if (c.has_sigma_head()) add_conv(out, "sigma_out", 1, trunk_out, 1);
  }
  return out;
}

NetworkWeights init_weights(const NetworkConfig& c) {
  c.validate();
  NetworkWeights w;
  std::mt19937_64 rng(c.rng_seed);
  for (const auto& spec : parameter_layout(c)) {
    NamedTensor t{spec.name, spec.shape, {}};
    t.data.assign(t.size(), 0.0f);
    if (!spec.is_bias) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : t.data) v = static_cast<float>(u(rng));
    }
    w.tensors.push_back(std::move(t));
  }
  return w;
}

void check_weights(const NetworkConfig& c, const NetworkWeights& w) {
  const auto layout = parameter_layout(c);
  if (layout.size() != w.tensors.size()) {
    throw ConfigError("weights have " + std::to_string(w.tensors.size()) +
                      " tensors, config implies " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = w.tensors[i];
    if (t.name != layout[i].name || t.shape != layout[i].shape || t.data.size() != t.size()) {
      throw ConfigError("weight tensor " + std::to_string(i) + " ('" + t.name +
                        "') does not match expected '" + layout[i].name + "'");
    }
    for (float v : t.data) {
      if (!std::isfinite(v)) throw NumericalError("non-finite weight in '" + t.name + "'");
    }
  }
}

}  // namespace volcal::net
