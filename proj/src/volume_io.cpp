#include "volcal/volume_io.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"

namespace volcal {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "volume payloads are little-endian; big-endian hosts are not supported");

fs::path header_path(const fs::path& p) {
  if (p.extension() == ".vjson") return p;
  fs::path h = p;
  h += ".vjson";
  return h;
}

fs::path payload_path(const fs::path& header) {
  fs::path p = header_path(header);
  p.replace_extension(".vraw");
  return p;
}

namespace {

struct Header {
  Dims dims;
  int channels = 1;
  std::string dtype;
  Spacing spacing{1.0, 1.0, 1.0};
  fs::path payload;
};

Header parse_header(const fs::path& hpath) {
  const std::string text = read_file(hpath);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("malformed volume header " + hpath.string() + ": " + e.what());
  }
  Header h;
  try {
    auto d = j.at("dims");
    if (!d.is_array() || d.size() != 3) throw FormatError("dims must have 3 entries");
    h.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    h.channels = j.at("channels").get<int>();
    h.dtype = j.at("dtype").get<std::string>();
    if (j.contains("spacing_mm")) {
      auto s = j["spacing_mm"];
      h.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    }
    const auto order = j.value("order", std::string("c-major"));
    if (order != "c-major") throw FormatError("unsupported order '" + order + "'");
    const auto endian = j.value("endian", std::string("little"));
    if (endian != "little") throw FormatError("unsupported endian '" + endian + "'");
    h.payload = j.contains("payload") ? hpath.parent_path() / j["payload"].get<std::string>()
                                      : payload_path(hpath);
  } catch (const json::exception& e) {
    throw FormatError("bad volume header " + hpath.string() + ": " + e.what());
  }
  if (h.dtype != "f32" && h.dtype != "u8") {
    throw UnknownDtypeError("unknown dtype '" + h.dtype + "' in " + hpath.string());
  }
  if (h.dims.depth <= 0 || h.dims.height <= 0 || h.dims.width <= 0 || h.channels <= 0) {
    throw FormatError("non-positive dims or channels in " + hpath.string());
  }
  return h;
}

std::string read_payload(const Header& h) {
  std::string raw = read_file(h.payload);
  const std::size_t elem = h.dtype == "f32" ? 4 : 1;
  const std::size_t expected = elem * static_cast<std::size_t>(h.channels) * h.dims.voxels();
  if (raw.size() != expected) {
    throw SizeMismatchError("payload " + h.payload.string() + " has " +
                            std::to_string(raw.size()) + " bytes, header implies " +
                            std::to_string(expected));
  }
  return raw;
}

MultiChannelVolume decode_f32(const Header& h, const std::string& raw) {
  std::vector<float> data(raw.size() / 4);
  std::memcpy(data.data(), raw.data(), raw.size());
  return MultiChannelVolume(h.dims, h.channels, std::move(data), h.spacing);
}

LabelVolume decode_u8(const Header& h, const std::string& raw) {
  if (h.channels != 1) throw FormatError("u8 label volumes must have one channel");
  std::vector<std::uint8_t> labels(raw.begin(), raw.end());
  return LabelVolume(h.dims, std::move(labels), h.spacing);
}

void write_pair(const fs::path& header, const Dims& dims, int channels, const char* dtype,
                const Spacing& spacing, std::span<const char> bytes) {
  const fs::path hpath = header_path(header);
  const fs::path ppath = payload_path(hpath);
  json j;
  j["dims"] = {dims.depth, dims.height, dims.width};
  j["channels"] = channels;
  j["dtype"] = dtype;
  j["spacing_mm"] = {spacing[0], spacing[1], spacing[2]};
  j["order"] = "c-major";
  j["endian"] = "little";
  j["payload"] = ppath.filename().string();
  write_file_atomic(ppath, bytes);
  write_text_atomic(hpath, j.dump(2) + "\n");
}

}  // namespace

AnyVolume read_volume(const fs::path& header) {
  const Header h = parse_header(header_path(header));
  const std::string raw = read_payload(h);
  if (h.dtype == "f32") return decode_f32(h, raw);
  return decode_u8(h, raw);
}

MultiChannelVolume read_multichannel(const fs::path& header) {
  auto v = read_volume(header);
  if (auto* m = std::get_if<MultiChannelVolume>(&v)) return std::move(*m);
  throw FormatError("expected an f32 volume: " + header.string());
}

LabelVolume read_labels(const fs::path& header) {
  auto v = read_volume(header);
  if (auto* l = std::get_if<LabelVolume>(&v)) return std::move(*l);
  throw FormatError("expected a u8 label volume: " + header.string());
}

void write_volume(const MultiChannelVolume& vol, const fs::path& header) {
  auto d = vol.data();
  write_pair(header, vol.dims(), vol.channels(), "f32", vol.spacing(),
             std::span<const char>(reinterpret_cast<const char*>(d.data()), d.size_bytes()));
}

void write_volume(const LabelVolume& vol, const fs::path& header) {
  auto d = vol.labels();
  write_pair(header, vol.dims(), 1, "u8", vol.spacing(),
             std::span<const char>(reinterpret_cast<const char*>(d.data()), d.size_bytes()));
}

void write_prob_volume(const ProbVolume& p, const fs::path& header) {
  auto v = p.values();
  write_volume(MultiChannelVolume(p.dims(), 1, std::vector<float>(v.begin(), v.end())), header);
}

void write_mask(const BinaryMask& m, const fs::path& header) {
  auto b = m.bits();
  write_volume(LabelVolume(m.dims(), std::vector<std::uint8_t>(b.begin(), b.end())), header);
}

}  // namespace volcal
