#pragma once

#include <filesystem>

#include "volcal/net/config.hpp"

namespace volcal::net {

struct SavedModel {
  NetworkConfig config;
  NetworkWeights weights;
};

// `dir/weights.json` (config echo plus name/shape/offset per tensor) and
// `dir/weights.f32` (little-endian float payload, tensors concatenated in order).
void save_model(const std::filesystem::path& dir, const NetworkConfig& config,
                const NetworkWeights& weights);
SavedModel load_model(const std::filesystem::path& dir);

}  // namespace volcal::net
