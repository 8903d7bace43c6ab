#pragma once

#include <cstddef>
#include <vector>

#include "volcal/volume.hpp"

namespace volcal::net {

// Feature map in channels-last order: data[voxel * channels + c].
template <typename S>
struct Tensor {
  Dims dims{};
  int channels = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(Dims d, int c) : dims(d), channels(c), data(d.voxels() * static_cast<std::size_t>(c), S(0)) {}

  std::size_t voxels() const { return dims.voxels(); }
  S* row(std::size_t v) { return data.data() + v * static_cast<std::size_t>(channels); }
  const S* row(std::size_t v) const { return data.data() + v * static_cast<std::size_t>(channels); }
  S& at(std::size_t v, int c) { return data[v * static_cast<std::size_t>(channels) + c]; }
  S at(std::size_t v, int c) const { return data[v * static_cast<std::size_t>(channels) + c]; }
};

// Channel-slowest volume to channels-last tensor.
template <typename S>
Tensor<S> to_tensor(const MultiChannelVolume& vol) {
  Tensor<S> t(vol.dims(), vol.channels());
  const std::size_t nv = vol.dims().voxels();
  for (int c = 0; c < vol.channels(); ++c) {
    const auto ch = vol.channel(c);
    for (std::size_t v = 0; v < nv; ++v) t.data[v * vol.channels() + c] = static_cast<S>(ch[v]);
  }
  return t;
}

}  // namespace volcal::net
