#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "volcal/manifest.hpp"
#include "volcal/pipeline.hpp"
#include "volcal/volumetrics.hpp"

using namespace volcal;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(VOLCAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("volcal_test_cli_" + std::to_string(std::random_device{}()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage and config errors exit 2") {
  Scratch s;
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("gen --count 10") == 2);  // --out is required
  CHECK(run("gen --out " + (s / "c") + " --bogus") == 2);
  CHECK(run("train --cohort x --out y --class liver") == 2);

  std::ofstream(s / "bad.toml") << "[run]\nseed = \"twelve\"\n";
  CHECK(run("pipeline --config " + (s / "bad.toml")) == 2);
  std::ofstream(s / "typo.toml") << "[sample]\nTT = 3\n";
  CHECK(run("pipeline --config " + (s / "typo.toml")) == 2);
  CHECK(run("gen --size 4 --out " + (s / "c")) == 2);
}

TEST_CASE("missing artifacts exit 3") {
  Scratch s;
  CHECK(run("sample --model " + (s / "nomodel") + " --out " + (s / "samples")) == 3);
  CHECK(run("calibrate --cdfs " + (s / "nocdfs") + " --truths " + (s / "nocohort") + " --out " + (s / "calib.json")) ==
        3);
  CHECK(run("report --root " + (s / "empty")) == 3);
  CHECK(run("evaluate --root " + (s / "empty")) == 3);
}

TEST_CASE("gen then calibrate on degenerate ranks exits 4") {
  Scratch s;
  REQUIRE(run("gen --count 20 --size 16 --seed 3 --out " + (s / "cohort") +
              " --config " + (s / "small.toml")) == 2);  // config file does not exist yet
  std::ofstream(s / "small.toml") << "[cohort]\nwhole_radius_min = 1.5\nwhole_radius_max = 5.0\n";
  REQUIRE(run("gen --count 20 --size 16 --seed 3 --out " + (s / "cohort") + " --config " + (s / "small.toml")) == 0);
  CHECK(fs::exists(s / "cohort/cohort.json"));
  CHECK(fs::exists(s / "cohort/manifest.json"));
  // idempotent
  REQUIRE(run("gen --count 20 --size 16 --seed 3 --out " + (s / "cohort") + " --config " + (s / "small.toml")) == 0);

  // Every validation CDF lies far above the true volume, so every rank is 0.
  const Cohort cohort = read_cohort(s / "cohort");
  const fs::path cdfs = s / "cdfs";
  fs::create_directories(cdfs);
  const auto grid = default_percentile_grid();
  for (const auto& e : cohort.in_split(Split::validation)) {
    VolumetricCdf cdf{grid, {}, e.id, TumourClass::whole};
    for (double p : grid) cdf.volumes.push_back(1e6 + p);
    write_cdf(cdf, cdfs / (e.id + ".csv"));
  }
  RunManifest m;
  m.stage = "cdf";
  m.summary = {{"class", "whole"}};
  write_manifest(cdfs, m);
  CHECK(run("calibrate --cdfs " + cdfs.string() + " --truths " + (s / "cohort/cohort.json") + " --out " +
            (s / "calib/calib.json")) == 4);
}
