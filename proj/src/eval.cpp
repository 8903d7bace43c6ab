#include "volcal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volcal/error.hpp"
#include "volcal/seeds.hpp"

namespace volcal {

double dice(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.dims() != truth.dims()) throw SizeMismatchError("dice: mask dims differ");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t v = 0; v < pred.bits().size(); ++v) {
    a += pred[v];
    b += truth[v];
    both += pred[v] && truth[v];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

CoverageReport coverage(std::span<const Interval> intervals, std::span<const double> truths,
                        TumourClass cls, double level, std::span<const std::string> subjects) {
  if (intervals.size() != truths.size()) throw ParameterError("coverage: one truth per interval");
  if (!subjects.empty() && subjects.size() != truths.size()) {
    throw ParameterError("coverage: one subject id per interval");
  }
  CoverageReport r;
  r.cls = cls;
  r.level = level;
  r.n = static_cast<int>(intervals.size());
  double width = 0.0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    CoverageRecord rec{subjects.empty() ? std::string() : subjects[i], truths[i], intervals[i],
                       intervals[i].contains(truths[i])};
    r.hits += rec.hit;
    width += intervals[i].width();
    r.records.push_back(std::move(rec));
  }
  if (r.n > 0) {
    r.coverage = static_cast<double>(r.hits) / r.n;
    r.mean_width = width / r.n;
  }
  return r;
}

double ks_uniform(std::span<const double> x) {
  if (x.empty()) throw ParameterError("KS statistic of an empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = std::clamp(s[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double boundary_concentration(const VarianceVolume& var, const BinaryMask& truth, double top_fraction,
                              int radius) {
  if (var.dims != truth.dims()) throw SizeMismatchError("boundary_concentration: dims differ");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw ParameterError("boundary_concentration: top_fraction must be in (0, 1]");
  }
  if (radius < 0) throw ParameterError("boundary_concentration: radius must be >= 0");
  const Dims& d = var.dims;
  const std::size_t n = d.voxels();

  std::vector<float> sorted(var.values.begin(), var.values.end());
  std::sort(sorted.begin(), sorted.end());
  const double cut = quantile_sorted(sorted, 1.0 - top_fraction);

  std::vector<std::uint8_t> boundary(n, 0);
  static constexpr int kNeighbours[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const std::size_t v = d.index(z, y, x);
        for (const auto& o : kNeighbours) {
          const int nz = z + o[0], ny = y + o[1], nx = x + o[2];
          if (d.contains(nz, ny, nx) && truth[d.index(nz, ny, nx)] != truth[v]) {
            boundary[v] = 1;
            break;
          }
        }
      }
    }
  }

  std::size_t top = 0, near = 0;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const double value = var.values[d.index(z, y, x)];
        if (!(value > 0.0) || value < cut) continue;
        ++top;
        bool found = false;
        for (int dz = -radius; dz <= radius && !found; ++dz) {
          for (int dy = -radius; dy <= radius && !found; ++dy) {
            for (int dx = -radius; dx <= radius && !found; ++dx) {
              if (dz * dz + dy * dy + dx * dx > radius * radius) continue;
              const int nz = z + dz, ny = y + dy, nx = x + dx;
              found = d.contains(nz, ny, nx) && boundary[d.index(nz, ny, nx)];
            }
          }
        }
        near += found;
      }
    }
  }
  if (top == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(near) / static_cast<double>(top);
}

std::vector<NoiseLevelResult> noise_sweep(const net::NetworkWeights& weights,
                                          const net::NetworkConfig& config, const Phantom& subject,
                                          TumourClass cls, const CalibrationMap& map,
                                          const NoiseSweepOptions& options) {
  const BinaryMask truth_mask = hierarchical_masks(subject.labels).get(cls);
  std::vector<NoiseLevelResult> out;
  for (std::size_t k = 0; k < options.sigma_pcts.size(); ++k) {
    NoiseLevelResult r;
    r.sigma_pct = options.sigma_pcts[k];
    r.truth = subject.true_volumes.get(cls);
    const auto noisy = add_gaussian_noise(subject.image, subject.labels, r.sigma_pct,
                                          derive_seed(options.noise_seed, "noise", std::to_string(k)));
    const auto s = mc_sample(weights, config, noisy, options.samples, options.sample_seed,
                             "", cls);
    r.maps = total_variance(s);
    r.dice = dice(threshold(r.maps.mean), truth_mask);
    const auto vols = sample_volumes(s);
    double sum = 0.0;
    for (double v : vols) sum += v;
    r.mean_volume = sum / static_cast<double>(vols.size());
    r.cdf = volumetric_cdf(s, options.grid);
    r.interval = calibrated_interval(r.cdf, map, options.level);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace volcal
