#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "volcal/error.hpp"
#include "volcal/mc_inference.hpp"
#include "volcal/net/model.hpp"

using namespace volcal;

namespace {

SampleSet from_columns(const std::vector<std::vector<float>>& per_voxel) {
  // per_voxel[v][t] -> pass-major storage
  const int t = static_cast<int>(per_voxel.front().size());
  const int nv = static_cast<int>(per_voxel.size());
  std::vector<float> probs(static_cast<std::size_t>(t) * nv);
  for (int v = 0; v < nv; ++v) {
    for (int i = 0; i < t; ++i) probs[static_cast<std::size_t>(i) * nv + v] = per_voxel[v][i];
  }
  return SampleSet("s", TumourClass::whole, Dims{1, 1, nv}, t, probs);
}

SampleSet random_set(std::mt19937_64& rng, int t, Dims d, bool with_sigmas = false) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> p(static_cast<std::size_t>(t) * d.voxels());
  for (auto& v : p) v = u(rng);
  std::vector<float> s;
  if (with_sigmas) {
    s.resize(p.size());
    for (auto& v : s) v = 2.0f * u(rng);
  }
  return SampleSet("r", TumourClass::core, d, t, p, s);
}

// Mean first, then squared deviations; the oracle for the one-pass estimator.
double two_pass_variance(const SampleSet& s, std::size_t v) {
  double mean = 0.0;
  for (int t = 0; t < s.count(); ++t) mean += s.sample(t)[v];
  mean /= s.count();
  double ss = 0.0;
  for (int t = 0; t < s.count(); ++t) {
    const double d = s.sample(t)[v] - mean;
    ss += d * d;
  }
  return ss / s.count();
}

net::NetworkConfig small_config(net::Variant v) {
  net::NetworkConfig c;
  c.variant = v;
  c.filters = {4, 4, 4, 4, 4};
  c.hetero_seg_filters = 4;
  c.hetero_sigma_filters = 4;
  c.input_channels = 2;
  c.rng_seed = 3;
  return c;
}

MultiChannelVolume random_input(Dims d, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> data(d.voxels() * c);
  for (auto& v : data) v = n(rng);
  return MultiChannelVolume(d, c, data);
}

}  // namespace

TEST_CASE("epistemic variance on hand-computed cases") {
  const auto s = from_columns({{0.2f, 0.5f, 0.8f}, {0.3f, 0.3f, 0.3f}});
  const auto v = epistemic_variance(s);
  // E[y^2] - E[y]^2 with the float inputs, computed independently.
  const double a = 0.2f, b = 0.5f, c = 0.8f;
  const double oracle = (a * a + b * b + c * c) / 3 - std::pow((a + b + c) / 3, 2);
  CHECK(v.values[0] == doctest::Approx(0.06).epsilon(1e-6));
  CHECK(std::abs(v.values[0] - oracle) < 1e-12);
  CHECK(v.values[1] == 0.0);

  const auto two = from_columns({{0.0f, 1.0f}});
  CHECK(epistemic_variance(two).values[0] == 0.25);

  const auto single = from_columns({{0.7f}});
  CHECK(epistemic_variance(single).values[0] == 0.0);
}

TEST_CASE("one-pass variance matches the two-pass oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = 1 + static_cast<int>(rng() % 50);
    const auto s = random_set(rng, t, {2, 3, 4});
    const auto v = epistemic_variance(s);
    for (std::size_t i = 0; i < s.voxels(); ++i) {
      CHECK(std::abs(v.values[i] - two_pass_variance(s, i)) < 1e-10);
      CHECK(v.values[i] >= 0.0);
      CHECK(v.values[i] <= 0.25);
    }
  }
}

TEST_CASE("total variance decomposition") {
  std::mt19937_64 rng(2);
  const auto plain = random_set(rng, 7, {2, 2, 2});
  const auto m = total_variance(plain);
  CHECK(m.var_total.values == m.var_epistemic.values);
  for (double a : m.var_aleatoric.values) CHECK(a == 0.0);

  const auto d = Dims{1, 2, 3};
  std::vector<float> p(5 * d.voxels(), 0.5f), s(5 * d.voxels(), 0.1f);
  const auto constant = total_variance(SampleSet("c", TumourClass::whole, d, 5, p, s));
  for (double a : constant.var_aleatoric.values) CHECK(a == doctest::Approx(0.01).epsilon(1e-6));

  const auto het = random_set(rng, 9, {2, 2, 3}, true);
  const auto hm = total_variance(het);
  for (std::size_t v = 0; v < het.voxels(); ++v) {
    double mean = 0.0, sig2 = 0.0;
    for (int t = 0; t < het.count(); ++t) {
      mean += het.sample(t)[v];
      sig2 += static_cast<double>(het.sigma(t)[v]) * het.sigma(t)[v];
    }
    CHECK(hm.mean[v] == doctest::Approx(mean / het.count()).epsilon(1e-6));
    CHECK(std::abs(hm.var_aleatoric.values[v] - sig2 / het.count()) < 1e-10);
    CHECK(std::abs(hm.var_total.values[v] - (hm.var_epistemic.values[v] + hm.var_aleatoric.values[v])) < 1e-12);
    CHECK(std::abs(hm.var_epistemic.values[v] - two_pass_variance(het, v)) < 1e-10);
  }
}

TEST_CASE("sample set invariants") {
  const Dims d{1, 1, 2};
  CHECK_THROWS_AS(SampleSet("x", TumourClass::whole, d, 0, {}), ParameterError);
  CHECK_THROWS_AS(SampleSet("x", TumourClass::whole, d, 1, {0.5f}), SizeMismatchError);
  CHECK_THROWS_AS(SampleSet("x", TumourClass::whole, d, 1, {0.5f, 1.2f}), Error);
  CHECK_THROWS_AS(SampleSet("x", TumourClass::whole, d, 1, {0.5f, 0.2f}, {0.1f, -0.1f}), Error);
}

TEST_CASE("mc sampling") {
  const Dims d{6, 6, 6};
  const auto input = random_input(d, 2, 9);

  SUBCASE("the dropout-free network repeats itself and has zero variance") {
    const auto config = small_config(net::Variant::standard);
    const auto s = mc_sample(net::init_weights(config), config, input, 20, 5);
    for (int t = 1; t < 20; ++t) {
      CHECK(std::equal(s.sample(t).begin(), s.sample(t).end(), s.sample(0).begin()));
    }
    for (double v : epistemic_variance(s).values) CHECK(v == 0.0);
  }

  SUBCASE("dropout sampling is seeded per pass") {
    const auto config = small_config(net::Variant::drop_all);
    const auto w = net::init_weights(config);
    const auto a = mc_sample(w, config, input, 6, 11);
    const auto b = mc_sample(w, config, input, 6, 11);
    CHECK(a == b);
    CHECK_FALSE(std::equal(a.sample(0).begin(), a.sample(0).end(), a.sample(1).begin()));
    // Pass t uses mask seed (seed XOR t).
    net::Model<float> model(config, w);
    const auto out = model.forward(net::to_tensor<float>(input), true, 11 ^ 3);
    const auto p = net::foreground_probability(out.logits);
    CHECK(std::equal(p.begin(), p.end(), a.sample(3).begin()));
    CHECK_FALSE(a == mc_sample(w, config, input, 6, 12));
  }

  SUBCASE("hetero sampling records sigma per pass") {
    const auto config = small_config(net::Variant::hetero);
    const auto s = mc_sample(net::init_weights(config), config, input, 4, 1);
    REQUIRE(s.has_sigmas());
    for (float v : s.sigmas()) CHECK(v >= 0.0f);
    const auto m = total_variance(s);
    for (double v : m.var_aleatoric.values) CHECK(v > 0.0);
  }
}

TEST_CASE("sample sets persist losslessly") {
  std::mt19937_64 rng(8);
  const auto dir = std::filesystem::temp_directory_path() / "volcal_test_samples";
  std::filesystem::create_directories(dir);
  const auto s = random_set(rng, 5, {2, 3, 4}, true);
  write_sample_set(s, dir / "r_core", 99, "hetero");
  CHECK(read_sample_set(dir / "r_core") == s);
  const auto plain = random_set(rng, 3, {2, 2, 2});
  write_sample_set(plain, dir / "plain", 1, "drop_all");
  CHECK(read_sample_set(dir / "plain") == plain);
}
