#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "volcal/volumetrics.hpp"

namespace volcal {

// g(p) = a p + b maps a raw CDF percentile to a calibrated one.
struct CalibrationMap {
  double a = 1.0;
  double b = 0.0;
  TumourClass cls = TumourClass::whole;
  int n = 0;
  double residual_rms = 0.0;
  std::uint64_t folds_seed = 0;

  double apply(double p) const { return a * p + b; }
  // Pull-back of a calibrated percentile, clamped to [0, 1].
  double invert(double q) const;
  // Throws ParameterError unless a > 0 and finite.
  void validate() const;
};

// Uniform plotting positions for the i-th of n sorted ranks (1-based):
// `mean` is i/(n+1), the expected uniform order statistic; `midpoint` is
// (i - 0.5)/n.
enum class PlottingPositions { mean, midpoint };

std::string_view to_string(PlottingPositions p);
PlottingPositions parse_plotting_positions(std::string_view s);
double plotting_position(PlottingPositions p, std::size_t i, std::size_t n);

std::vector<double> compute_ranks(std::span<const VolumetricCdf> cdfs, std::span<const double> truths);

// Least squares of sorted ranks against uniform plotting positions.
// Throws ParameterError for n < 2 and NumericalError when all ranks coincide.
CalibrationMap fit_affine(std::span<const double> ranks, TumourClass cls = TumourClass::whole,
                          PlottingPositions positions = PlottingPositions::mean);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double p_lo = 0.0;  // percentiles the endpoints were read at
  double p_hi = 1.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
  double width() const { return hi - lo; }
};

// Central `level` interval: q_lo = (1 - level)/2, q_hi = 1 - q_lo, each pulled
// back through the map and read off the CDF.
Interval calibrated_interval(const VolumetricCdf& cdf, const CalibrationMap& map, double level);

// min/max of the per-sample volumes: the uncalibrated baseline.
Interval sample_range_interval(std::span<const double> sample_volumes);

struct ThreefoldResult {
  std::vector<double> ranks;           // input order
  std::vector<int> fold;               // fold index per subject, input order
  std::array<CalibrationMap, 3> fold_maps;  // map k is fitted without fold k
  std::vector<Interval> intervals;     // each from the map that excludes its own fold
  CalibrationMap pooled;               // fitted on every subject; used for test data
};

// Folds come from a seeded permutation: the subject at position i lands in fold i % 3.
ThreefoldResult threefold_validation_calibration(std::span<const VolumetricCdf> cdfs,
                                                 std::span<const double> truths, double level,
                                                 std::uint64_t seed,
                                                 TumourClass cls = TumourClass::whole,
                                                 PlottingPositions positions = PlottingPositions::mean);

nlohmann::json to_json(const CalibrationMap& m);
CalibrationMap calibration_from_json(const nlohmann::json& j);

// calib.json: one entry per class name.
void write_calibration(const std::map<TumourClass, CalibrationMap>& maps,
                       const std::filesystem::path& path);
std::map<TumourClass, CalibrationMap> read_calibration(const std::filesystem::path& path);

}  // namespace volcal
