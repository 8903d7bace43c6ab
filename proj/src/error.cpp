#include "volcal/error.hpp"

namespace volcal {

InvalidLabelError::InvalidLabelError(std::size_t voxel, int label)
    : FormatError("invalid label " + std::to_string(label) + " at voxel index " +
                  std::to_string(voxel) + " (expected 0..3)"),
      voxel_(voxel),
      label_(label) {}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 3;
  if (dynamic_cast<const FormatError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace volcal
