#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "volcal/calibration.hpp"
#include "volcal/error.hpp"
#include "volcal/eval.hpp"

using namespace volcal;

namespace {

// Closed-form simple linear regression, written out independently.
std::pair<double, double> ols(std::vector<double> x, bool midpoint) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double sx = 0, su = 0, sxx = 0, sxu = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = midpoint ? (i + 0.5) / n : (i + 1.0) / (n + 1.0);
    sx += x[i];
    su += u;
    sxx += x[i] * x[i];
    sxu += x[i] * u;
  }
  const double a = (n * sxu - sx * su) / (n * sxx - sx * sx);
  return {a, (su - a * sx) / n};
}

// CDF whose rank of v is exactly v (volume == percentile).
VolumetricCdf identity_cdf() {
  VolumetricCdf c;
  c.percentiles = default_percentile_grid();
  c.volumes = c.percentiles;
  return c;
}

VolumetricCdf linear_cdf(double lo, double hi) {
  VolumetricCdf c;
  c.percentiles = {0.0, 1.0};
  c.volumes = {lo, hi};
  return c;
}

}  // namespace

TEST_CASE("affine fit closed forms") {
  const std::vector<double> r3{0.4, 0.5, 0.6};
  const auto m = fit_affine(r3);
  CHECK(std::abs(m.a - 2.5) < 1e-12);
  CHECK(std::abs(m.b + 0.75) < 1e-12);
  CHECK(m.apply(0.4) == doctest::Approx(0.25));
  CHECK(m.apply(0.6) == doctest::Approx(0.75));
  CHECK(m.n == 3);

  // Two ranks with midpoint positions u = {0.25, 0.75}.
  const std::vector<double> r2{0.9, 0.1};
  const auto m2 = fit_affine(r2, TumourClass::whole, PlottingPositions::midpoint);
  CHECK(std::abs(m2.a - 0.625) < 1e-12);
  CHECK(std::abs(m2.b - 0.1875) < 1e-12);
  // Mean positions u = {1/3, 2/3}: slope (1/3)/0.8, line through (0.5, 0.5).
  const auto m2b = fit_affine(r2);
  CHECK(std::abs(m2b.a - 5.0 / 12.0) < 1e-12);
  CHECK(std::abs(m2b.b - (0.5 - 0.5 * 5.0 / 12.0)) < 1e-12);
  // Midpoint positions for {0.4, 0.5, 0.6} are {1/6, 1/2, 5/6}.
  const auto m3 = fit_affine(r3, TumourClass::whole, PlottingPositions::midpoint);
  CHECK(std::abs(m3.a - 10.0 / 3.0) < 1e-12);
  CHECK(std::abs(m3.b + 7.0 / 6.0) < 1e-12);

  for (auto pp : {PlottingPositions::mean, PlottingPositions::midpoint}) {
    std::vector<double> plotting;
    for (std::size_t i = 1; i <= 10; ++i) plotting.push_back(plotting_position(pp, i, 10));
    std::reverse(plotting.begin(), plotting.end());
    const auto id = fit_affine(plotting, TumourClass::whole, pp);
    CHECK(id.a == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(id.b) < 1e-12);
    CHECK(id.residual_rms < 1e-12);
  }

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(3 + trial % 20);
    for (auto& v : r) v = u(rng);
    for (bool midpoint : {false, true}) {
      const auto f = fit_affine(r, TumourClass::whole,
                                midpoint ? PlottingPositions::midpoint : PlottingPositions::mean);
      const auto [a, b] = ols(r, midpoint);
      CHECK(f.a == doctest::Approx(a).epsilon(1e-9));
      CHECK(f.b == doctest::Approx(b).epsilon(1e-9));
    }
  }
}

TEST_CASE("affine fit failure modes") {
  const std::vector<double> same{0.3, 0.3, 0.3};
  CHECK_THROWS_AS(fit_affine(same), NumericalError);
  const std::vector<double> one{0.3};
  CHECK_THROWS_AS(fit_affine(one), ParameterError);
  CalibrationMap bad;
  bad.a = -1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  CHECK_THROWS_AS(calibrated_interval(identity_cdf(), bad, 0.9), ParameterError);
}

TEST_CASE("affine fit is shift-equivariant") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(24), shifted(24);
    const double c = u(rng);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = u(rng);
      shifted[i] = r[i] + c;
    }
    const auto m = fit_affine(r);
    const auto s = fit_affine(shifted);
    CHECK(s.a == doctest::Approx(m.a).epsilon(1e-9));
    CHECK(s.b == doctest::Approx(m.b - m.a * c).epsilon(1e-9));
  }
}

TEST_CASE("ranks") {
  const auto c = linear_cdf(10.0, 20.0);
  const std::vector<VolumetricCdf> cdfs{c, c, c};
  const std::vector<double> below{1.0, 2.0, 9.99};
  for (double r : compute_ranks(cdfs, below)) CHECK(r == 0.0);
  const std::vector<double> median{15.0, 15.0, 15.0};
  for (double r : compute_ranks(cdfs, median)) CHECK(r == 0.5);
  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(compute_ranks(cdfs, wrong), ParameterError);

  // Truths drawn at uniform percentiles of their CDFs give near-uniform ranks.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<VolumetricCdf> many;
  std::vector<double> truths;
  for (int i = 0; i < 24; ++i) {
    const double lo = 100 + 50 * u(rng);
    many.push_back(linear_cdf(lo, lo + 30));
    truths.push_back(lo + 30 * u(rng));
  }
  CHECK(ks_uniform(compute_ranks(many, truths)) < 0.2);
}

TEST_CASE("calibrated intervals") {
  const auto c = identity_cdf();
  const CalibrationMap id;
  const auto iv = calibrated_interval(c, id, 0.9);
  CHECK(iv.lo == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(iv.hi == doctest::Approx(0.95).epsilon(1e-12));

  CalibrationMap m;
  m.a = 2.5;
  m.b = -0.75;
  const auto iv2 = calibrated_interval(c, m, 0.9);
  CHECK(iv2.p_lo == doctest::Approx(0.32).epsilon(1e-12));
  CHECK(iv2.p_hi == doctest::Approx(0.68).epsilon(1e-12));
  CHECK(iv2.lo == doctest::Approx(0.32).epsilon(1e-12));

  for (double a : {0.3, 0.5, 0.9}) {
    CalibrationMap w;
    w.a = a;
    w.b = (1 - a) / 2;
    const auto iw = calibrated_interval(c, w, 0.9);
    CHECK(iw.p_lo < 0.05);
    CHECK(iw.p_hi > 0.95);
  }

  // Extreme maps saturate at the CDF ends.
  CalibrationMap tiny;
  tiny.a = 0.01;
  tiny.b = 0.5;
  const auto sat = calibrated_interval(linear_cdf(3, 7), tiny, 0.9);
  CHECK(sat.lo == 3.0);
  CHECK(sat.hi == 7.0);

  CHECK_THROWS_AS(calibrated_interval(c, id, 1.0), ParameterError);
  CHECK_THROWS_AS(calibrated_interval(c, id, 0.0), ParameterError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 3);
  for (int trial = 0; trial < 100; ++trial) {
    CalibrationMap r;
    r.a = u(rng);
    r.b = u(rng) - 1.5;
    const auto x = calibrated_interval(linear_cdf(1, 1 + u(rng)), r, 0.8);
    CHECK(x.lo <= x.hi);
  }
}

TEST_CASE("three-fold calibration") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<VolumetricCdf> cdfs;
  std::vector<double> truths;
  for (int i = 0; i < 24; ++i) {
    cdfs.push_back(linear_cdf(10, 20));
    // Over-confident CDFs: truths spill past both ends.
    truths.push_back(5 + 20 * u(rng));
  }
  const auto r = threefold_validation_calibration(cdfs, truths, 0.9, 1234);
  int sizes[3] = {0, 0, 0};
  for (int f : r.fold) sizes[f]++;
  CHECK(sizes[0] == 8);
  CHECK(sizes[1] == 8);
  CHECK(sizes[2] == 8);

  // Each fold's map equals a fit that never sees that fold's ranks.
  for (int k = 0; k < 3; ++k) {
    std::vector<double> others;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (r.fold[i] != k) others.push_back(cdf_rank(cdfs[i], truths[i]));
    }
    const auto ref = fit_affine(others);
    CHECK(r.fold_maps[k].a == ref.a);
    CHECK(r.fold_maps[k].b == ref.b);
  }
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto expect = calibrated_interval(cdfs[i], r.fold_maps[r.fold[i]], 0.9);
    CHECK(r.intervals[i].lo == expect.lo);
    CHECK(r.intervals[i].hi == expect.hi);
  }
  const auto pooled = fit_affine(compute_ranks(cdfs, truths));
  CHECK(r.pooled.a == pooled.a);
  CHECK(r.pooled.b == pooled.b);

  const auto again = threefold_validation_calibration(cdfs, truths, 0.9, 1234);
  CHECK(again.fold == r.fold);
  const auto other = threefold_validation_calibration(cdfs, truths, 0.9, 99);
  CHECK(other.fold != r.fold);

  const std::vector<VolumetricCdf> two(cdfs.begin(), cdfs.begin() + 2);
  const std::vector<double> two_t(truths.begin(), truths.begin() + 2);
  CHECK_THROWS_AS(threefold_validation_calibration(two, two_t, 0.9, 1), ParameterError);
}

TEST_CASE("calibration maps persist per class") {
  std::map<TumourClass, CalibrationMap> maps;
  for (auto c : kAllClasses) {
    CalibrationMap m;
    m.cls = c;
    m.a = 0.5 + static_cast<int>(c) * 0.1;
    m.b = 0.1234567890123;
    m.n = 24;
    m.residual_rms = 0.01;
    m.folds_seed = 0xfeedfacecafebeefULL;
    maps[c] = m;
  }
  const auto path = std::filesystem::temp_directory_path() / "volcal_test_calib.json";
  write_calibration(maps, path);
  const auto back = read_calibration(path);
  REQUIRE(back.size() == 3);
  for (auto c : kAllClasses) {
    CHECK(back.at(c).a == maps[c].a);
    CHECK(back.at(c).b == maps[c].b);
    CHECK(back.at(c).folds_seed == maps[c].folds_seed);
    CHECK(back.at(c).cls == c);
  }
}
