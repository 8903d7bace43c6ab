#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volcal {

// Grid extent in voxels, indexed (z, y, x) with x fastest.
struct Dims {
  int depth = 0;
  int height = 0;
  int width = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(depth) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(height) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool contains(int z, int y, int x) const {
    return z >= 0 && z < depth && y >= 0 && y < height && x >= 0 && x < width;
  }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

using Spacing = std::array<double, 3>;

// Dense C-channel scalar field. Channel is the slowest axis:
// data[c * voxels + dims.index(z, y, x)].
class MultiChannelVolume {
 public:
  MultiChannelVolume() = default;
  MultiChannelVolume(Dims dims, int channels, std::vector<float> data,
                     Spacing spacing = {1.0, 1.0, 1.0});

  const Dims& dims() const { return dims_; }
  int channels() const { return channels_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> channel(int c) const;
  float at(int c, std::size_t voxel) const { return data_[c * dims_.voxels() + voxel]; }

  bool operator==(const MultiChannelVolume&) const = default;

 private:
  Dims dims_{};
  int channels_ = 0;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

// Integer tumour labels: 0 background, 1 Gd-enhancing, 2 edema,
// 3 necrotic/non-enhancing.
class LabelVolume {
 public:
  static constexpr std::uint8_t kMaxLabel = 3;

  LabelVolume() = default;
  // Throws InvalidLabelError on the first label outside 0..3.
  LabelVolume(Dims dims, std::vector<std::uint8_t> labels, Spacing spacing = {1.0, 1.0, 1.0});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::uint8_t operator[](std::size_t voxel) const { return labels_[voxel]; }

  bool operator==(const LabelVolume&) const = default;

 private:
  Dims dims_{};
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> labels_;
};

// 0/1 voxel mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(Dims dims, std::vector<std::uint8_t> bits);

  const Dims& dims() const { return dims_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  bool operator[](std::size_t voxel) const { return bits_[voxel] != 0; }
  std::size_t count() const;
  // True when every voxel set here is also set in `other`.
  bool subset_of(const BinaryMask& other) const;

  bool operator==(const BinaryMask&) const = default;

 private:
  Dims dims_{};
  std::vector<std::uint8_t> bits_;
};

// Per-voxel foreground probability in [0, 1].
class ProbVolume {
 public:
  ProbVolume() = default;
  ProbVolume(Dims dims, std::vector<float> p);

  const Dims& dims() const { return dims_; }
  std::span<const float> values() const { return p_; }
  float operator[](std::size_t voxel) const { return p_[voxel]; }

  bool operator==(const ProbVolume&) const = default;

 private:
  Dims dims_{};
  std::vector<float> p_;
};

enum class TumourClass { whole, core, active };

std::string_view to_string(TumourClass c);
TumourClass parse_tumour_class(std::string_view name);
inline constexpr std::array<TumourClass, 3> kAllClasses{TumourClass::whole, TumourClass::core,
                                                        TumourClass::active};

struct HierarchicalMasks {
  BinaryMask active;  // label 1
  BinaryMask core;    // labels 1, 3
  BinaryMask whole;   // labels 1, 2, 3

  const BinaryMask& get(TumourClass c) const;
};

bool in_class(std::uint8_t label, TumourClass c);

HierarchicalMasks hierarchical_masks(const LabelVolume& labels);
// Validating overload for raw label buffers.
HierarchicalMasks hierarchical_masks(Dims dims, std::span<const std::uint8_t> labels);

// Sum of foreground probabilities, in voxel units. Accumulates in double.
double volume_of(const ProbVolume& p);
double volume_of(std::span<const float> p);
double volume_of(const BinaryMask& m);

}  // namespace volcal
