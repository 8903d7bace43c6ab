#include "volcal/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"
#include "volcal/seeds.hpp"

namespace volcal {

double CalibrationMap::invert(double q) const { return std::clamp((q - b) / a, 0.0, 1.0); }

void CalibrationMap::validate() const {
  if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ParameterError("calibration map needs a finite slope a > 0");
  }
}

std::string_view to_string(PlottingPositions p) {
  return p == PlottingPositions::mean ? "mean" : "midpoint";
}

PlottingPositions parse_plotting_positions(std::string_view s) {
  if (s == "mean") return PlottingPositions::mean;
  if (s == "midpoint") return PlottingPositions::midpoint;
  throw ParameterError("unknown plotting positions '" + std::string(s) + "' (expected mean|midpoint)");
}

double plotting_position(PlottingPositions p, std::size_t i, std::size_t n) {
  const double k = static_cast<double>(i);
  const double m = static_cast<double>(n);
  return p == PlottingPositions::mean ? k / (m + 1.0) : (k - 0.5) / m;
}

std::vector<double> compute_ranks(std::span<const VolumetricCdf> cdfs, std::span<const double> truths) {
  if (cdfs.size() != truths.size()) throw ParameterError("need exactly one truth per CDF");
  std::vector<double> ranks(cdfs.size());
  for (std::size_t i = 0; i < cdfs.size(); ++i) ranks[i] = cdf_rank(cdfs[i], truths[i]);
  return ranks;
}

CalibrationMap fit_affine(std::span<const double> ranks, TumourClass cls,
                          PlottingPositions positions) {
  const std::size_t n = ranks.size();
  if (n < 2) throw ParameterError("affine calibration needs at least 2 ranks");
  std::vector<double> r(ranks.begin(), ranks.end());
  std::sort(r.begin(), r.end());
  double r_mean = 0.0, u_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r_mean += r[i];
    u_mean += plotting_position(positions, i + 1, n);
  }
  r_mean /= static_cast<double>(n);
  u_mean /= static_cast<double>(n);
  double sxx = 0.0, sxu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = plotting_position(positions, i + 1, n);
    sxx += (r[i] - r_mean) * (r[i] - r_mean);
    sxu += (r[i] - r_mean) * (u - u_mean);
  }
  if (!(sxx > 0.0)) throw NumericalError("degenerate calibration fit: all ranks identical");
  CalibrationMap m;
  m.cls = cls;
  m.n = static_cast<int>(n);
  m.a = sxu / sxx;
  m.b = u_mean - m.a * r_mean;
  if (!(m.a > 0.0)) throw NumericalError("calibration fit produced a non-positive slope");
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = m.apply(r[i]) - plotting_position(positions, i + 1, n);
    ss += e * e;
  }
  m.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return m;
}

Interval calibrated_interval(const VolumetricCdf& cdf, const CalibrationMap& map, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ParameterError("interval level must be in (0, 1)");
  map.validate();
  const double q_lo = (1.0 - level) / 2.0;
  const double q_hi = 1.0 - q_lo;
  Interval iv;
  iv.p_lo = map.invert(q_lo);
  iv.p_hi = map.invert(q_hi);
  iv.lo = cdf.value_at(iv.p_lo);
  iv.hi = cdf.value_at(iv.p_hi);
  return iv;
}

Interval sample_range_interval(std::span<const double> v) {
  if (v.empty()) throw ParameterError("no sample volumes");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi, 0.0, 1.0};
}

ThreefoldResult threefold_validation_calibration(std::span<const VolumetricCdf> cdfs,
                                                 std::span<const double> truths, double level,
                                                 std::uint64_t seed, TumourClass cls,
                                                 PlottingPositions positions) {
  const std::size_t n = cdfs.size();
  if (n < 3) throw ParameterError("3-fold calibration needs at least 3 validation subjects");
  ThreefoldResult res;
  res.ranks = compute_ranks(cdfs, truths);
  res.fold.assign(n, 0);
  const auto order = seeded_permutation(static_cast<int>(n), seed);
  for (std::size_t pos = 0; pos < n; ++pos) res.fold[order[pos]] = static_cast<int>(pos % 3);

  for (int k = 0; k < 3; ++k) {
    std::vector<double> others;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.fold[i] != k) others.push_back(res.ranks[i]);
    }
    res.fold_maps[k] = fit_affine(others, cls, positions);
    res.fold_maps[k].folds_seed = seed;
  }
  res.intervals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.intervals[i] = calibrated_interval(cdfs[i], res.fold_maps[res.fold[i]], level);
  }
  res.pooled = fit_affine(res.ranks, cls, positions);
  res.pooled.folds_seed = seed;
  return res;
}

nlohmann::json to_json(const CalibrationMap& m) {
  return {{"class", to_string(m.cls)}, {"a", m.a},  {"b", m.b}, {"n", m.n},
          {"residual_rms", m.residual_rms}, {"folds_seed", m.folds_seed}};
}

CalibrationMap calibration_from_json(const nlohmann::json& j) {
  CalibrationMap m;
  try {
    m.cls = parse_tumour_class(j.at("class").get<std::string>());
    m.a = j.at("a").get<double>();
    m.b = j.at("b").get<double>();
    m.n = j.at("n").get<int>();
    m.residual_rms = j.at("residual_rms").get<double>();
    m.folds_seed = j.at("folds_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad calibration map: ") + e.what());
  }
  m.validate();
  return m;
}

void write_calibration(const std::map<TumourClass, CalibrationMap>& maps,
                       const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [cls, m] : maps) j[std::string(to_string(cls))] = to_json(m);
  write_text_atomic(path, j.dump(2) + "\n");
}

std::map<TumourClass, CalibrationMap> read_calibration(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::map<TumourClass, CalibrationMap> out;
  for (const auto& [name, entry] : j.items()) out[parse_tumour_class(name)] = calibration_from_json(entry);
  return out;
}

}  // namespace volcal
