#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcal/pipeline.hpp"
#include "volcal/svg.hpp"

namespace volcal {

struct ScatterPoint {
  std::string subject;
  double truth = 0.0;
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Predicted vs true volume, one marker per subject with its interval as a bar.
Svg volume_scatter(std::span<const ScatterPoint> points, const std::string& title);

struct RankHistogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 1]
  std::vector<int> pre;
  std::vector<int> post;
  double ks_pre = 0.0;
  double ks_post = 0.0;
};

// Equal-width bins; a rank of exactly 1 falls in the last bin.
RankHistogram rank_histogram(std::span<const double> pre, std::span<const double> post, int bins = 10);
Svg rank_histogram_plot(const RankHistogram& h, const std::string& title);

// One 2-D scalar image, row-major (height x width), drawn with the heat ramp
// over [lo, hi]; an optional binary overlay is outlined.
struct SlicePanel {
  std::string title;
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::uint8_t> outline;
};

SlicePanel axial_slice(std::span<const float> volume, const Dims& dims, int z, std::string title);
// The axial slice holding the most mask voxels (lowest z on ties).
int busiest_slice(const BinaryMask& mask);
Svg slice_panels(const std::vector<SlicePanel>& panels, const std::string& title, double cell = 6.0);

struct NoisePoint {
  double sigma_pct = 0.0;
  double truth = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double mean_volume = 0.0;
  double dice = 0.0;
};

struct NoiseSeries {
  std::string label;
  std::vector<NoisePoint> points;
  std::vector<SlicePanel> variance;  // one per level, may be empty
};

Svg noise_panel(const std::vector<NoiseSeries>& series, const std::string& title);

struct ReportInputs {
  TreeLayout tree;
  std::vector<TumourClass> classes;
  std::vector<ModelSpec> primary;
  std::string noise_subject;
  double level = 0.9;
};

struct ReportFiles {
  std::vector<std::filesystem::path> files;  // relative to the report directory
  nlohmann::json summary;
};

// Writes every CSV and SVG of the report bundle into `out`.
ReportFiles write_report(const ReportInputs& in, const std::filesystem::path& out);

}  // namespace volcal
