#pragma once

#include <filesystem>
#include <variant>

#include "volcal/volume.hpp"

namespace volcal {

// On-disk volume: `<stem>.vjson` header plus `<stem>.vraw` little-endian payload.
//
// Header fields: dims [depth, height, width], channels, dtype ("f32" | "u8"),
// spacing_mm [z, y, x], order ("c-major": channel slowest, then z, y, x),
// endian ("little"), payload (file name of the raw data, relative to the header).
using AnyVolume = std::variant<MultiChannelVolume, LabelVolume>;

// `header` may be the .vjson path or the stem; the payload is resolved next to it.
AnyVolume read_volume(const std::filesystem::path& header);
MultiChannelVolume read_multichannel(const std::filesystem::path& header);
LabelVolume read_labels(const std::filesystem::path& header);

void write_volume(const MultiChannelVolume& vol, const std::filesystem::path& header);
void write_volume(const LabelVolume& vol, const std::filesystem::path& header);

std::filesystem::path header_path(const std::filesystem::path& p);
std::filesystem::path payload_path(const std::filesystem::path& header);

// Convenience wrappers for single-channel outputs.
void write_prob_volume(const ProbVolume& p, const std::filesystem::path& header);
void write_mask(const BinaryMask& m, const std::filesystem::path& header);

}  // namespace volcal
