#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "volcal/volume.hpp"

namespace volcal {

using Range = std::pair<double, double>;

// Nested-ellipsoid tumour phantom. Radii are in voxels; the core and active
// ellipsoids are the whole ellipsoid scaled by the drawn fractions, shifted
// off-centre by at most half of the slack the scaling leaves.
struct PhantomSpec {
  int size = 32;
  int num_channels = 4;
  Range whole_radius_range{4.5, 10.5};
  Range core_fraction_range{0.55, 0.8};
  Range active_fraction_range{0.3, 0.5};
  // Per-axis radius multiplier is drawn from [1 - jitter, 1 + jitter].
  double aspect_jitter = 0.15;
  double texture_noise_sd = 1.0;
  double background_intensity = 4.0;
  // Class mean separation between adjacent classes, in texture SDs.
  double contrast_in_sd = 1.5;
  std::uint64_t rng_seed = 0;

  // Throws ParameterError on broken fraction ordering or radii that cannot fit.
  void validate() const;
};

struct ClassVolumes {
  double whole = 0.0;
  double core = 0.0;
  double active = 0.0;

  double get(TumourClass c) const;
  bool operator==(const ClassVolumes&) const = default;
};

struct Phantom {
  MultiChannelVolume image;
  LabelVolume labels;
  ClassVolumes true_volumes;
};

Phantom generate_phantom(const PhantomSpec& spec);

// Per channel, sigma = sigma_pct * mean intensity over voxels with label != 0;
// adds i.i.d. N(0, sigma^2) to every voxel of that channel.
MultiChannelVolume add_gaussian_noise(const MultiChannelVolume& vol, const LabelVolume& labels,
                                      double sigma_pct, std::uint64_t seed);
// The per-channel sigma add_gaussian_noise would use.
std::vector<double> noise_sigmas(const MultiChannelVolume& vol, const LabelVolume& labels,
                                 double sigma_pct);

enum class Split { train, validation, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct CohortSpec {
  int count = 120;
  // Held-out subjects appended to the test split beyond the 70:20:10 partition.
  int extra_test = 0;
  std::uint64_t seed = 0;
  PhantomSpec phantom;  // rng_seed and whole_radius_range are set per subject
};

struct CohortEntry {
  std::string id;
  std::uint64_t seed = 0;
  Split split = Split::train;
  ClassVolumes true_volumes;
};

struct SplitCounts {
  int train = 0;
  int validation = 0;
  int test = 0;
};

// 70:20:10 partition of `count` subjects.
SplitCounts split_counts(int count);

std::string subject_id(int index);

// Subject i's phantom spec: seed derived from the cohort seed and id; whole
// radii drawn from a log-spaced stratum so the cohort spans the full range.
PhantomSpec subject_spec(const CohortSpec& cohort, int index);

// Manifest entries without generating images (true volumes filled by caller).
std::vector<CohortEntry> plan_cohort(const CohortSpec& cohort);

}  // namespace volcal
