#include "volcal/volumetrics.hpp"

#include <algorithm>
#include <cmath>

#include "volcal/csv.hpp"
#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"

namespace volcal {

namespace {

void check_q(double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ParameterError("quantile level must be in [0, 1], got " + format_double(q));
  }
}

}  // namespace

double quantile_sorted(std::span<const float> sorted, double q) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * q;
  const std::size_t lo = std::min(static_cast<std::size_t>(std::floor(h)), n - 1);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double a = sorted[lo];
  const double b = sorted[hi];
  // Clamping keeps the estimate inside its order-statistic bracket, which
  // makes it monotone in q even under rounding.
  return std::clamp(a + (h - static_cast<double>(lo)) * (b - a), a, b);
}

std::vector<double> default_percentile_grid() {
  std::vector<double> g(101);
  for (int k = 0; k <= 100; ++k) g[k] = k / 100.0;
  return g;
}

std::vector<ProbVolume> voxelwise_quantiles(const SampleSet& s, std::span<const double> grid) {
  for (double q : grid) check_q(q);
  const std::size_t nv = s.voxels();
  const int t = s.count();
  std::vector<std::vector<float>> out(grid.size(), std::vector<float>(nv));
  std::vector<float> column(t);
  for (std::size_t v = 0; v < nv; ++v) {
    for (int i = 0; i < t; ++i) column[i] = s.probs()[static_cast<std::size_t>(i) * nv + v];
    std::sort(column.begin(), column.end());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      out[k][v] = static_cast<float>(quantile_sorted(column, grid[k]));
    }
  }
  std::vector<ProbVolume> vols;
  vols.reserve(grid.size());
  for (auto& o : out) vols.emplace_back(s.dims(), std::move(o));
  return vols;
}

ProbVolume voxelwise_quantile(const SampleSet& s, double q) {
  const double grid[1] = {q};
  return std::move(voxelwise_quantiles(s, grid).front());
}

VolumetricCdf volumetric_cdf(const SampleSet& s, std::span<const double> grid) {
  if (grid.empty()) throw ParameterError("percentile grid is empty");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw ParameterError("percentile grid must be strictly ascending");
  }
  VolumetricCdf cdf;
  cdf.subject = s.subject();
  cdf.cls = s.cls();
  cdf.percentiles.assign(grid.begin(), grid.end());
  for (const auto& q : voxelwise_quantiles(s, grid)) cdf.volumes.push_back(volume_of(q));
  return cdf;
}

void VolumetricCdf::validate() const {
  if (percentiles.size() < 2 || percentiles.size() != volumes.size()) {
    throw FormatError("CDF needs >= 2 knots with one volume per percentile");
  }
  if (percentiles.front() != 0.0 || percentiles.back() != 1.0) {
    throw FormatError("CDF percentile grid must span [0, 1]");
  }
  for (std::size_t k = 1; k < percentiles.size(); ++k) {
    if (!(percentiles[k] > percentiles[k - 1])) throw FormatError("CDF percentiles not ascending");
    if (!(volumes[k] >= volumes[k - 1])) throw FormatError("CDF volumes not monotone");
  }
}

double VolumetricCdf::value_at(double p) const {
  p = std::clamp(p, percentiles.front(), percentiles.back());
  const auto it = std::upper_bound(percentiles.begin(), percentiles.end(), p);
  if (it == percentiles.end()) return volumes.back();
  const std::size_t k = static_cast<std::size_t>(it - percentiles.begin());
  const double p0 = percentiles[k - 1], p1 = percentiles[k];
  const double v0 = volumes[k - 1], v1 = volumes[k];
  return std::clamp(v0 + (p - p0) / (p1 - p0) * (v1 - v0), v0, v1);
}

double cdf_rank(const VolumetricCdf& cdf, double v) {
  const auto& vol = cdf.volumes;
  const auto& pct = cdf.percentiles;
  if (v < vol.front()) return 0.0;
  if (v > vol.back()) return 1.0;
  const auto first = std::lower_bound(vol.begin(), vol.end(), v);
  const auto last = std::upper_bound(vol.begin(), vol.end(), v);
  if (first != last) {
    const std::size_t a = static_cast<std::size_t>(first - vol.begin());
    const std::size_t b = static_cast<std::size_t>(last - vol.begin()) - 1;
    return 0.5 * (pct[a] + pct[b]);
  }
  // vol[k - 1] < v < vol[k]
  const std::size_t k = static_cast<std::size_t>(first - vol.begin());
  const double t = (v - vol[k - 1]) / (vol[k] - vol[k - 1]);
  return pct[k - 1] + t * (pct[k] - pct[k - 1]);
}

BinaryMask threshold(const ProbVolume& p, float level) {
  std::vector<std::uint8_t> bits(p.values().size());
  for (std::size_t v = 0; v < bits.size(); ++v) bits[v] = p[v] > level ? 1 : 0;
  return BinaryMask(p.dims(), std::move(bits));
}

BinaryMask percentile_contour(const SampleSet& s, double q) {
  return threshold(voxelwise_quantile(s, q));
}

std::string cdf_csv(const VolumetricCdf& cdf) {
  CsvWriter w({"percentile", "volume"});
  for (std::size_t k = 0; k < cdf.percentiles.size(); ++k) {
    w.row({format_double(cdf.percentiles[k]), format_double(cdf.volumes[k])});
  }
  return w.str();
}

void write_cdf(const VolumetricCdf& cdf, const std::filesystem::path& path) {
  write_text_atomic(path, cdf_csv(cdf));
}

VolumetricCdf read_cdf(const std::filesystem::path& path, std::string subject, TumourClass cls) {
  const auto t = read_csv(path);
  VolumetricCdf cdf;
  cdf.subject = std::move(subject);
  cdf.cls = cls;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    cdf.percentiles.push_back(t.number(r, "percentile"));
    cdf.volumes.push_back(t.number(r, "volume"));
  }
  cdf.validate();
  return cdf;
}

}  // namespace volcal
