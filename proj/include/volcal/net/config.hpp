#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace volcal::net {

// Stochasticity variants. `standard` is the dropout-free baseline (named
// "default" on disk and on the command line).
enum class Variant { standard, drop_last, drop_all, hetero };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

// `highres`: first conv, three residual blocks of two dilated convs
// (dilations 1, 2, 4), a closing conv and a 1x1x1 classifier.
// `shallow`: one 3x3x3 conv and the classifier; used for gradient checks.
enum class Architecture { highres, shallow };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

struct NetworkConfig {
  Variant variant = Variant::drop_all;
  Architecture architecture = Architecture::highres;
  // First conv, the three residual blocks, the closing conv.
  std::array<int, 5> filters{8, 8, 16, 32, 32};
  double dropout_p = 0.5;
  double input_dropout_p = 0.05;
  int hetero_seg_filters = 40;
  int hetero_sigma_filters = 28;
  int num_classes = 2;
  int input_channels = 4;
  // Noise draws per voxel in the heteroscedastic loss during training.
  int hetero_noise_samples = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool has_sigma_head() const { return variant == Variant::hetero; }
  bool stochastic() const { return variant != Variant::standard; }
  bool input_dropout() const { return variant == Variant::drop_all || variant == Variant::hetero; }
  bool block_dropout() const { return input_dropout(); }
  bool final_dropout() const { return variant != Variant::standard; }
};

nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig config_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t size() const;
  bool operator==(const NamedTensor&) const = default;
};

// Ordered parameter list. Conv kernels are stored [kd, kh, kw, cin, cout].
struct NetworkWeights {
  std::vector<NamedTensor> tensors;

  const NamedTensor& at(std::string_view name) const;
  std::size_t parameter_count() const;
  bool operator==(const NetworkWeights&) const = default;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in = 0;
  bool is_bias = false;
};

// Names and shapes implied by the config, in storage order.
std::vector<ParamSpec> parameter_layout(const NetworkConfig& c);

// Kernels ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; seeded by rng_seed.
NetworkWeights init_weights(const NetworkConfig& c);

// Throws ConfigError when names/shapes do not match the layout.
void check_weights(const NetworkConfig& c, const NetworkWeights& w);

}  // namespace volcal::net
