#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "volcal/error.hpp"
#include "volcal/eval.hpp"

using namespace volcal;

namespace {

BinaryMask mask(std::vector<std::uint8_t> bits) {
  const int n = static_cast<int>(bits.size());
  return BinaryMask({1, 1, n}, std::move(bits));
}

}  // namespace

TEST_CASE("dice") {
  CHECK(dice(mask({1, 1, 0, 1}), mask({1, 1, 0, 1})) == 1.0);
  CHECK(dice(mask({1, 1, 0, 0}), mask({0, 0, 1, 1})) == 0.0);
  CHECK(dice(mask({1, 1, 0}), mask({0, 1, 1})) == 0.5);
  CHECK(dice(mask({0, 0, 0}), mask({0, 0, 0})) == 1.0);
  CHECK_THROWS_AS(dice(mask({0, 1}), mask({0, 1, 1})), SizeMismatchError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::uint8_t> a(40), b(40);
    for (auto& v : a) v = rng() % 3 == 0;
    for (auto& v : b) v = rng() % 2 == 0;
    const double d = dice(mask(a), mask(b));
    CHECK(d == dice(mask(b), mask(a)));
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    std::vector<int> perm(40);
    for (int i = 0; i < 40; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::uint8_t> pa(40), pb(40);
    for (int i = 0; i < 40; ++i) {
      pa[i] = a[perm[i]];
      pb[i] = b[perm[i]];
    }
    CHECK(dice(mask(pa), mask(pb)) == d);
  }
}

TEST_CASE("coverage") {
  const std::vector<Interval> vacuous{{0, 1e300}, {0, 1e300}};
  const std::vector<double> t2{5, 15};
  CHECK(coverage(vacuous, t2).coverage == 1.0);

  const std::vector<Interval> exact{{5, 5}, {15, 15}};
  CHECK(coverage(exact, t2).coverage == 1.0);

  const std::vector<Interval> mixed{{4, 6}, {16, 20}};
  const auto r = coverage(mixed, t2, TumourClass::core, 0.9);
  CHECK(r.coverage == 0.5);
  CHECK(r.hits == 1);
  CHECK(r.n == 2);
  CHECK(r.mean_width == 3.0);
  CHECK(r.records[0].hit);
  CHECK_FALSE(r.records[1].hit);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<Interval> iv;
  std::vector<double> truths;
  for (int i = 0; i < 30; ++i) {
    const double a = u(rng), b = u(rng);
    iv.push_back({std::min(a, b), std::max(a, b)});
    truths.push_back(u(rng));
  }
  const double cov = coverage(iv, truths).coverage;
  std::vector<int> idx(30);
  for (int i = 0; i < 30; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Interval> iv2;
  std::vector<double> t2b;
  for (int i : idx) {
    iv2.push_back(iv[i]);
    t2b.push_back(truths[i]);
  }
  CHECK(coverage(iv2, t2b).coverage == cov);
  const auto rep = coverage(iv, truths);
  CHECK(rep.hits <= rep.n);
}

TEST_CASE("KS distance to the uniform") {
  const std::vector<double> perfect{0.125, 0.375, 0.625, 0.875};
  CHECK(ks_uniform(perfect) == doctest::Approx(0.125));
  const std::vector<double> piled{0.5, 0.5, 0.5, 0.5};
  CHECK(ks_uniform(piled) == doctest::Approx(0.5));
  const std::vector<double> zeros{0.0, 0.0};
  CHECK(ks_uniform(zeros) == doctest::Approx(1.0));
}

TEST_CASE("noise sweep without noise reproduces the clean pipeline") {
  PhantomSpec spec;
  spec.size = 12;
  spec.num_channels = 2;
  spec.whole_radius_range = {2.5, 3.5};
  spec.rng_seed = 4;
  const auto p = generate_phantom(spec);
  net::NetworkConfig config;
  config.filters = {3, 3, 3, 3, 3};
  config.input_channels = 2;
  const auto w = net::init_weights(config);
  CalibrationMap map;
  NoiseSweepOptions opt;
  opt.samples = 8;
  opt.sample_seed = 21;
  opt.sigma_pcts = {0.0, 0.3};
  const auto r = noise_sweep(w, config, p, TumourClass::whole, map, opt);
  REQUIRE(r.size() == 2);
  const auto clean = mc_sample(w, config, p.image, 8, 21, "", TumourClass::whole);
  const auto cdf = volumetric_cdf(clean, opt.grid);
  const auto iv = calibrated_interval(cdf, map, 0.9);
  CHECK(r[0].interval.lo == iv.lo);
  CHECK(r[0].interval.hi == iv.hi);
  CHECK(r[0].cdf.volumes == cdf.volumes);
  CHECK(r[0].truth == p.true_volumes.whole);
  CHECK(r[1].cdf.volumes != cdf.volumes);
}

TEST_CASE("boundary concentration of high-variance voxels") {
  // 12^3 grid, cube mask occupying [3, 9) on every axis.
  const Dims d{12, 12, 12};
  std::vector<std::uint8_t> bits(d.voxels(), 0);
  for (int z = 3; z < 9; ++z)
    for (int y = 3; y < 9; ++y)
      for (int x = 3; x < 9; ++x) bits[d.index(z, y, x)] = 1;
  const BinaryMask cube(d, bits);

  VarianceVolume on_edge{d, std::vector<double>(d.voxels(), 0.0)};
  on_edge.values[d.index(3, 5, 5)] = 1.0;   // inside, on the face
  on_edge.values[d.index(1, 5, 5)] = 1.0;   // two voxels outside the face
  CHECK(boundary_concentration(on_edge, cube, 0.002) == 1.0);

  VarianceVolume far{d, std::vector<double>(d.voxels(), 0.0)};
  far.values[d.index(0, 0, 0)] = 2.0;       // a corner, distance > 2 from the cube
  far.values[d.index(3, 5, 5)] = 2.0;
  CHECK(boundary_concentration(far, cube, 0.002) == 0.5);

  // Euclidean radius: (0, 1, 1) is sqrt(12) from the nearest boundary voxel, (2, 3, 3).
  VarianceVolume diag{d, std::vector<double>(d.voxels(), 0.0)};
  diag.values[d.index(0, 1, 1)] = 1.0;
  CHECK(boundary_concentration(diag, cube, 0.0005) == 0.0);
  CHECK(boundary_concentration(diag, cube, 0.0005, 3) == 0.0);
  CHECK(boundary_concentration(diag, cube, 0.0005, 4) == 1.0);

  VarianceVolume none{d, std::vector<double>(d.voxels(), 0.0)};
  CHECK(std::isnan(boundary_concentration(none, cube)));
  CHECK_THROWS_AS(boundary_concentration(none, cube, 0.0), ParameterError);
}
