#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "volcal/calibration.hpp"
#include "volcal/mc_inference.hpp"
#include "volcal/net/config.hpp"
#include "volcal/phantom.hpp"

namespace volcal {

// 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const BinaryMask& pred, const BinaryMask& truth);

struct CoverageRecord {
  std::string subject;
  double truth = 0.0;
  Interval interval;
  bool hit = false;
};

struct CoverageReport {
  TumourClass cls = TumourClass::whole;
  double level = 0.9;
  int n = 0;
  int hits = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  std::vector<CoverageRecord> records;
};

// A hit is lo <= truth <= hi.
CoverageReport coverage(std::span<const Interval> intervals, std::span<const double> truths,
                        TumourClass cls = TumourClass::whole, double level = 0.9,
                        std::span<const std::string> subjects = {});

// Kolmogorov-Smirnov distance between the empirical distribution of `x`
// and U(0, 1).
double ks_uniform(std::span<const double> x);

// Fraction of the highest-variance voxels (those at or above the
// (1 - top_fraction) quantile of `var`, and strictly positive) lying within
// Euclidean distance `radius` of the label boundary of `truth`. Boundary
// voxels are those with a 6-neighbour of the other mask value. NaN when no
// voxel has positive variance.
double boundary_concentration(const VarianceVolume& var, const BinaryMask& truth,
                              double top_fraction = 0.01, int radius = 2);

struct NoiseLevelResult {
  double sigma_pct = 0.0;
  double dice = 0.0;          // mean-probability segmentation vs truth
  double mean_volume = 0.0;   // mean of per-sample volumes
  double truth = 0.0;
  VolumetricCdf cdf;
  Interval interval;
  UncertaintyMaps maps;
};

struct NoiseSweepOptions {
  std::vector<double> sigma_pcts{0.0, 0.1, 0.2, 0.4};
  int samples = 200;
  // Shared by every level so the sigma = 0 level reproduces the clean run.
  std::uint64_t sample_seed = 0;
  // Level k corrupts with derive_seed(noise_seed, "noise", <k>).
  std::uint64_t noise_seed = 0;
  double level = 0.9;
  std::vector<double> grid = default_percentile_grid();
};

std::vector<NoiseLevelResult> noise_sweep(const net::NetworkWeights& weights,
                                          const net::NetworkConfig& config, const Phantom& subject,
                                          TumourClass cls, const CalibrationMap& map,
                                          const NoiseSweepOptions& options);

}  // namespace volcal
