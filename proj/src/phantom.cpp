#include "volcal/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "volcal/error.hpp"
#include "volcal/seeds.hpp"

namespace volcal {

namespace {

// Class mean offsets in units of the contrast step, rows indexed by label
// (0 background, 1 enhancing, 2 edema, 3 necrotic). Every spatially adjacent
// pair differs by exactly one step in at least one channel.
constexpr std::array<std::array<int, 4>, 4> kContrast{{
    {0, 0, 0, 0},
    {1, 1, 1, 0},
    {1, 0, 1, 0},
    {1, 0, 2, -1},
}};

double max_aspect(double jitter) { return 1.0 / ((1.0 - jitter) * (1.0 - jitter)); }

struct Ellipsoid {
  std::array<double, 3> centre;  // z, y, x in voxel coordinates
  std::array<double, 3> radii;

  bool contains(double z, double y, double x) const {
    const double dz = (z - centre[0]) / radii[0];
    const double dy = (y - centre[1]) / radii[1];
    const double dx = (x - centre[2]) / radii[2];
    return dz * dz + dy * dy + dx * dx <= 1.0;
  }
};

double uniform(std::mt19937_64& rng, const Range& r) {
  if (r.first == r.second) return r.first;
  return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}

std::array<double, 3> random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::array<double, 3> d{n(rng), n(rng), n(rng)};
  const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (len == 0.0) return {0.0, 0.0, 0.0};
  for (auto& v : d) v /= len;
  return d;
}

// Inner ellipsoid = outer scaled by `fraction`, centre shifted by up to half
// the slack; keeps the inner set inside the outer.
Ellipsoid nested(const Ellipsoid& outer, double fraction, std::mt19937_64& rng) {
  Ellipsoid inner;
  const auto dir = random_direction(rng);
  const double shift = 0.5 * (1.0 - fraction) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int k = 0; k < 3; ++k) {
    inner.radii[k] = outer.radii[k] * fraction;
    inner.centre[k] = outer.centre[k] + outer.radii[k] * shift * dir[k];
  }
  return inner;
}

}  // namespace

void PhantomSpec::validate() const {
  if (size < 8) throw ParameterError("phantom size must be >= 8");
  if (num_channels < 1) throw ParameterError("phantom needs at least one channel");
  if (!(whole_radius_range.first > 0.0 && whole_radius_range.first <= whole_radius_range.second)) {
    throw ParameterError("whole_radius_range must satisfy 0 < lo <= hi");
  }
  if (!(aspect_jitter >= 0.0 && aspect_jitter < 0.5)) {
    throw ParameterError("aspect_jitter must be in [0, 0.5)");
  }
  const double reach = whole_radius_range.second * max_aspect(aspect_jitter);
  if (reach + 1.0 > 0.5 * size) {
    throw ParameterError("whole radius up to " + std::to_string(reach) +
                         " voxels does not fit a volume of size " + std::to_string(size));
  }
  auto in_unit = [](const Range& r) {
    return r.first > 0.0 && r.first <= r.second && r.second <= 1.0;
  };
  if (!in_unit(core_fraction_range) || !in_unit(active_fraction_range)) {
    throw ParameterError("fraction ranges must satisfy 0 < lo <= hi <= 1");
  }
  if (active_fraction_range.second > core_fraction_range.first) {
    throw ParameterError("active fractions must not exceed core fractions");
  }
  if (!(texture_noise_sd >= 0.0) || !(contrast_in_sd >= 0.0)) {
    throw ParameterError("noise and contrast must be non-negative");
  }
}

double ClassVolumes::get(TumourClass c) const {
  switch (c) {
    case TumourClass::whole: return whole;
    case TumourClass::core: return core;
    case TumourClass::active: return active;
  }
  return whole;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);

  const double scale = uniform(rng, spec.whole_radius_range);
  const double ax = uniform(rng, {1.0 - spec.aspect_jitter, 1.0 + spec.aspect_jitter});
  const double ay = uniform(rng, {1.0 - spec.aspect_jitter, 1.0 + spec.aspect_jitter});
  // Product of aspects is 1, so the ellipsoid volume depends on `scale` alone.
  const std::array<double, 3> radii{scale / (ax * ay), scale * ay, scale * ax};

  Ellipsoid whole;
  whole.radii = radii;
  for (int k = 0; k < 3; ++k) {
    const double lo = radii[k] + 1.0;
    const double hi = spec.size - 2.0 - radii[k];
    whole.centre[k] = lo >= hi ? 0.5 * (spec.size - 1) : uniform(rng, {lo, hi});
  }

  const double core_fraction = uniform(rng, spec.core_fraction_range);
  const double active_fraction =
      std::min(uniform(rng, spec.active_fraction_range), core_fraction);
  const Ellipsoid core = nested(whole, core_fraction, rng);
  const Ellipsoid active = nested(core, active_fraction / core_fraction, rng);

  const Dims dims{spec.size, spec.size, spec.size};
  std::vector<std::uint8_t> labels(dims.voxels(), 0);
  ClassVolumes volumes;
  for (int z = 0; z < spec.size; ++z) {
    for (int y = 0; y < spec.size; ++y) {
      for (int x = 0; x < spec.size; ++x) {
        std::uint8_t l = 0;
        if (active.contains(z, y, x)) {
          l = 1;
        } else if (core.contains(z, y, x)) {
          l = 3;
        } else if (whole.contains(z, y, x)) {
          l = 2;
        }
        labels[dims.index(z, y, x)] = l;
        volumes.whole += in_class(l, TumourClass::whole);
        volumes.core += in_class(l, TumourClass::core);
        volumes.active += in_class(l, TumourClass::active);
      }
    }
  }

  const double step = spec.contrast_in_sd * spec.texture_noise_sd;
  std::normal_distribution<double> texture(0.0, 1.0);
  std::vector<float> data(static_cast<std::size_t>(spec.num_channels) * dims.voxels());
  for (int c = 0; c < spec.num_channels; ++c) {
    const int row = c % 4;
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
      const double mean = spec.background_intensity + step * kContrast[labels[v]][row];
      data[c * dims.voxels() + v] =
          static_cast<float>(mean + spec.texture_noise_sd * texture(rng));
    }
  }

  return {MultiChannelVolume(dims, spec.num_channels, std::move(data)),
          LabelVolume(dims, std::move(labels)), volumes};
}

std::vector<double> noise_sigmas(const MultiChannelVolume& vol, const LabelVolume& labels,
                                 double sigma_pct) {
  if (!(sigma_pct >= 0.0)) throw ParameterError("sigma_pct must be >= 0");
  if (labels.dims() != vol.dims()) throw ParameterError("labels are not aligned with the volume");
  std::vector<double> sigmas(vol.channels());
  for (int c = 0; c < vol.channels(); ++c) {
    const auto ch = vol.channel(c);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t v = 0; v < ch.size(); ++v) {
      if (labels[v] != 0) {
        sum += ch[v];
        ++n;
      }
    }
    if (n == 0) throw NumericalError("noise sigma undefined: no foreground voxels");
    sigmas[c] = sigma_pct * (sum / static_cast<double>(n));
  }
  return sigmas;
}

MultiChannelVolume add_gaussian_noise(const MultiChannelVolume& vol, const LabelVolume& labels,
                                      double sigma_pct, std::uint64_t seed) {
  const auto sigmas = noise_sigmas(vol, labels, sigma_pct);
  std::vector<float> out(vol.data().begin(), vol.data().end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t nv = vol.dims().voxels();
  for (int c = 0; c < vol.channels(); ++c) {
    const double sigma = std::abs(sigmas[c]);
    if (sigma == 0.0) continue;
    for (std::size_t v = 0; v < nv; ++v) {
      out[c * nv + v] = static_cast<float>(out[c * nv + v] + sigma * n(rng));
    }
  }
  return MultiChannelVolume(vol.dims(), vol.channels(), std::move(out), vol.spacing());
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

SplitCounts split_counts(int count) {
  SplitCounts c;
  c.train = static_cast<int>(std::lround(0.7 * count));
  c.validation = static_cast<int>(std::lround(0.2 * count));
  c.test = count - c.train - c.validation;
  return c;
}

std::string subject_id(int index) {
  std::string s = std::to_string(index);
  if (s.size() < 3) s.insert(0, 3 - s.size(), '0');
  return "sub-" + s;
}

PhantomSpec subject_spec(const CohortSpec& cohort, int index) {
  const int total = cohort.count + cohort.extra_test;
  if (index < 0 || index >= total) throw ParameterError("subject index out of range");
  PhantomSpec spec = cohort.phantom;
  spec.rng_seed = derive_seed(cohort.seed, "phantom", subject_id(index));
  const auto strata = seeded_permutation(total, derive_seed(cohort.seed, "phantom-strata"));
  const double lo = std::log(cohort.phantom.whole_radius_range.first);
  const double hi = std::log(cohort.phantom.whole_radius_range.second);
  const double width = (hi - lo) / total;
  const int s = strata[index];
  spec.whole_radius_range = {std::exp(lo + width * s), std::exp(lo + width * (s + 1))};
  return spec;
}

std::vector<CohortEntry> plan_cohort(const CohortSpec& cohort) {
  if (cohort.count < 3) throw ConfigError("cohort needs at least 3 subjects");
  if (cohort.extra_test < 0) throw ConfigError("extra_test must be >= 0");
  const auto r = cohort.phantom.whole_radius_range;
  if (std::pow(r.second / r.first, 3.0) < 10.0) {
    throw ConfigError("whole_radius_range must span a volume ratio of at least 10");
  }
  const SplitCounts counts = split_counts(cohort.count);
  const auto order = seeded_permutation(cohort.count, derive_seed(cohort.seed, "split"));
  std::vector<CohortEntry> entries(cohort.count + cohort.extra_test);
  for (int i = 0; i < cohort.count + cohort.extra_test; ++i) {
    entries[i].id = subject_id(i);
    entries[i].seed = derive_seed(cohort.seed, "phantom", entries[i].id);
    entries[i].split = Split::test;
  }
  for (int pos = 0; pos < cohort.count; ++pos) {
    const int i = order[pos];
    entries[i].split = pos < counts.train                      ? Split::train
                       : pos < counts.train + counts.validation ? Split::validation
                                                                : Split::test;
  }
  return entries;
}

}  // namespace volcal
