#include "volcal/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volcal/error.hpp"

namespace volcal {

std::string to_string(const Dims& d) {
  return std::to_string(d.depth) + "x" + std::to_string(d.height) + "x" + std::to_string(d.width);
}

namespace {

void check_dims(const Dims& d) {
  if (d.depth <= 0 || d.height <= 0 || d.width <= 0) {
    throw ParameterError("volume dims must be positive, got " + to_string(d));
  }
}

}  // namespace

MultiChannelVolume::MultiChannelVolume(Dims dims, int channels, std::vector<float> data,
                                       Spacing spacing)
    : dims_(dims), channels_(channels), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims_);
  if (channels_ <= 0) throw ParameterError("channel count must be positive");
  if (data_.size() != static_cast<std::size_t>(channels_) * dims_.voxels()) {
    throw SizeMismatchError("volume data length " + std::to_string(data_.size()) +
                            " != channels x voxels = " +
                            std::to_string(static_cast<std::size_t>(channels_) * dims_.voxels()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericalError("non-finite intensity at flat index " + std::to_string(i));
    }
  }
}

std::span<const float> MultiChannelVolume::channel(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * dims_.voxels(),
                                               dims_.voxels());
}

LabelVolume::LabelVolume(Dims dims, std::vector<std::uint8_t> labels, Spacing spacing)
    : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
  check_dims(dims_);
  if (labels_.size() != dims_.voxels()) {
    throw SizeMismatchError("label data length " + std::to_string(labels_.size()) +
                            " != voxels " + std::to_string(dims_.voxels()));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > kMaxLabel) throw InvalidLabelError(i, labels_[i]);
  }
}

BinaryMask::BinaryMask(Dims dims, std::vector<std::uint8_t> bits)
    : dims_(dims), bits_(std::move(bits)) {
  if (bits_.size() != dims_.voxels()) {
    throw SizeMismatchError("mask length does not match dims " + to_string(dims_));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
  if (other.dims_ != dims_) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

ProbVolume::ProbVolume(Dims dims, std::vector<float> p) : dims_(dims), p_(std::move(p)) {
  if (p_.size() != dims_.voxels()) {
    throw SizeMismatchError("probability volume length does not match dims " + to_string(dims_));
  }
  for (std::size_t i = 0; i < p_.size(); ++i) {
    if (!(p_[i] >= 0.0f && p_[i] <= 1.0f)) {
      throw NumericalError("probability outside [0,1] at voxel " + std::to_string(i));
    }
  }
}

std::string_view to_string(TumourClass c) {
  switch (c) {
    case TumourClass::whole: return "whole";
    case TumourClass::core: return "core";
    case TumourClass::active: return "active";
  }
  return "?";
}

TumourClass parse_tumour_class(std::string_view name) {
  for (auto c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw ParameterError("unknown class '" + std::string(name) + "' (expected whole|core|active)");
}

const BinaryMask& HierarchicalMasks::get(TumourClass c) const {
  switch (c) {
    case TumourClass::whole: return whole;
    case TumourClass::core: return core;
    case TumourClass::active: return active;
  }
  return whole;
}

bool in_class(std::uint8_t label, TumourClass c) {
  switch (c) {
    case TumourClass::whole: return label >= 1 && label <= 3;
    case TumourClass::core: return label == 1 || label == 3;
    case TumourClass::active: return label == 1;
  }
  return false;
}

HierarchicalMasks hierarchical_masks(Dims dims, std::span<const std::uint8_t> labels) {
  if (labels.size() != dims.voxels()) {
    throw SizeMismatchError("label buffer does not match dims " + to_string(dims));
  }
  std::vector<std::uint8_t> active(labels.size()), core(labels.size()), whole(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t l = labels[i];
    if (l > LabelVolume::kMaxLabel) throw InvalidLabelError(i, l);
    active[i] = in_class(l, TumourClass::active);
    core[i] = in_class(l, TumourClass::core);
    whole[i] = in_class(l, TumourClass::whole);
  }
  return {BinaryMask(dims, std::move(active)), BinaryMask(dims, std::move(core)),
          BinaryMask(dims, std::move(whole))};
}

HierarchicalMasks hierarchical_masks(const LabelVolume& labels) {
  return hierarchical_masks(labels.dims(), labels.labels());
}

double volume_of(std::span<const float> p) {
  double sum = 0.0;
  for (float v : p) sum += v;
  return sum;
}

double volume_of(const ProbVolume& p) { return volume_of(p.values()); }

double volume_of(const BinaryMask& m) { return static_cast<double>(m.count()); }

}  // namespace volcal
