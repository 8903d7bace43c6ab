#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volcal/mc_inference.hpp"
#include "volcal/volume.hpp"

namespace volcal {

// Percentile -> volume curve for one subject and class.
struct VolumetricCdf {
  std::vector<double> percentiles;  // ascending, first 0, last 1
  std::vector<double> volumes;      // voxel counts, non-decreasing
  std::string subject;
  TumourClass cls = TumourClass::whole;

  // Volume at percentile p by linear interpolation between knots (p clamped to [0, 1]).
  double value_at(double p) const;
  // Throws FormatError when the grid or monotonicity contract is broken.
  void validate() const;
};

// Linear interpolation between order statistics ("type 7"): h = (n - 1) q.
// `sorted` must be ascending and non-empty. The result lies in
// [sorted[floor h], sorted[ceil h]] and is non-decreasing in q.
double quantile_sorted(std::span<const float> sorted, double q);

// 101 evenly spaced points 0.00 .. 1.00.
std::vector<double> default_percentile_grid();

ProbVolume voxelwise_quantile(const SampleSet& s, double q);
// All grid levels at once, sorting each voxel's samples a single time.
std::vector<ProbVolume> voxelwise_quantiles(const SampleSet& s, std::span<const double> grid);

VolumetricCdf volumetric_cdf(const SampleSet& s, std::span<const double> grid);

// Percentile at which the CDF reaches v. Below/above the range -> 0/1; on a
// flat run of knots equal to v -> midpoint of that run's percentiles.
double cdf_rank(const VolumetricCdf& cdf, double v);

// voxelwise_quantile(s, q) > 0.5.
BinaryMask percentile_contour(const SampleSet& s, double q);
BinaryMask threshold(const ProbVolume& p, float level = 0.5f);

// CSV with columns percentile,volume.
std::string cdf_csv(const VolumetricCdf& cdf);
void write_cdf(const VolumetricCdf& cdf, const std::filesystem::path& path);
VolumetricCdf read_cdf(const std::filesystem::path& path, std::string subject, TumourClass cls);

}  // namespace volcal
