#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "volcal/error.hpp"
#include "volcal/manifest.hpp"
#include "volcal/pipeline.hpp"

using namespace volcal;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny(const fs::path& out) {
  PipelineConfig c;
  c.seed = 7;
  c.out = out;
  c.cohort.count = 20;
  c.cohort.extra_test = 2;
  c.cohort.phantom.size = 16;
  c.cohort.phantom.whole_radius_range = {1.5, 5.0};
  c.network.filters = {4, 4, 8, 8, 8};
  c.training.max_epochs = 40;
  c.training.learning_rate = 0.003;
  c.classes = {TumourClass::whole};
  c.baseline_variants = {};
  c.samples = 8;
  c.map_samples = 4;
  c.noise_levels = {0.0, 0.2};
  return c;
}

std::map<std::string, bool> executed(const std::vector<StageOutcome>& outcomes) {
  std::map<std::string, bool> ran;
  for (const auto& o : outcomes) ran[o.stage] = ran[o.stage] || o.executed;
  return ran;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const MissingArtifactError& e) {
    return e.what();
  }
  return "no error";
}

// Built once per process; every subcase brings the tree back up to date first.
const fs::path& tree_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / ("volcal_test_pipeline_" + std::to_string(std::random_device{}()));
    fs::remove_all(r);
    std::ostringstream log;
    const auto first = run_pipeline(tiny(r), {1, "test", &log});
    REQUIRE(first.size() == 7);
    for (const auto& o : first) CHECK_MESSAGE(o.executed, o.stage);
    return r;
  }();
  return root;
}

struct Cleanup {
  ~Cleanup() {
    std::error_code ec;
    fs::remove_all(tree_root(), ec);
  }
};

}  // namespace

TEST_CASE("pipeline stages are idempotent and resumable") {
  const fs::path root = tree_root();
  static Cleanup cleanup;
  const PipelineConfig c = tiny(root);
  const TreeLayout tree{root};
  std::ostringstream log;
  const StageOptions opts{1, "test", &log};
  run_pipeline(c, opts);
  CHECK(read_manifest(root).stage == "pipeline");

  SUBCASE("rerun over a complete tree executes nothing") {
    const auto again = run_pipeline(c, opts);
    for (const auto& o : again) {
      CHECK_MESSAGE(!o.executed, o.stage);
      CHECK(o.reason == "up to date");
    }
  }

  SUBCASE("deleting calib.json reruns calibrate, evaluate and report only") {
    fs::remove(tree.calibration());
    const auto ran = executed(run_pipeline(c, opts));
    CHECK_FALSE(ran.at("gen"));
    CHECK_FALSE(ran.at("train"));
    CHECK_FALSE(ran.at("sample"));
    CHECK_FALSE(ran.at("cdf"));
    CHECK(ran.at("calibrate"));
    CHECK(ran.at("evaluate"));
    CHECK(ran.at("report"));
  }

  SUBCASE("changing the sampling count reruns sample onwards") {
    PipelineConfig d = c;
    d.samples = 9;
    const auto ran = executed(run_pipeline(d, opts));
    CHECK_FALSE(ran.at("gen"));
    CHECK_FALSE(ran.at("train"));
    CHECK(ran.at("sample"));
    CHECK(ran.at("cdf"));
    CHECK(ran.at("report"));
  }

  SUBCASE("csv headers") {
    const std::map<fs::path, std::string> headers{
        {tree.eval() / "intervals.csv",
         "class,subject,truth,mean_volume,rank,calibrated_rank,range_lo,range_hi,raw_lo,raw_hi,cal_lo,cal_hi,"
         "range_hit,raw_hit,cal_hit"},
        {tree.eval() / "coverage.csv", "class,level,method,n,hits,coverage,mean_width"},
        {tree.eval() / "ranks.csv", "class,subject,rank_pre,rank_post"},
        {tree.eval() / "boundary.csv", "class,n,subjects_passing,fraction_passing,subject_threshold"},
        {tree.eval() / "dice.csv", "variant,class,subject,dice"},
        {tree.eval() / "dice_summary.csv", "variant,class,n,mean_dice,min_dice"},
        {tree.eval() / "noise_sweep.csv",
         "class,subject,sigma_pct,dice,mean_volume,truth,lo,hi,contains,mean_var_epistemic,max_var_epistemic"},
        {tree.calibration_dir() / "folds.csv", "class,subject,fold,rank,lo,hi,truth,hit"},
        {tree.report() / "rank_histogram.csv", "class,bin_lo,bin_hi,pre,post"},
        {tree.report() / "ks.csv", "class,n,ks_pre,ks_post"},
        {tree.cdfs({net::Variant::drop_all, TumourClass::whole}) / "summary.csv",
         "subject,split,truth,mean_volume,min_volume,max_volume,dice,boundary_fraction"},
        {tree.model({net::Variant::drop_all, TumourClass::whole}) / "train_log.csv",
         "epoch,train_loss,val_loss,improved"},
    };
    for (const auto& [path, header] : headers) {
      INFO(path.string());
      REQUIRE(fs::exists(path));
      CHECK(first_line(path) == header);
    }
    const auto cohort = read_cohort(tree.cohort());
    const auto test_ids = cohort.in_split(Split::test);
    // one interval row per test subject
    std::ifstream in(tree.eval() / "intervals.csv");
    int rows = -1;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == static_cast<int>(test_ids.size()));
    CHECK(fs::exists(tree.report() / "scatter_whole.svg"));
    CHECK(fs::exists(tree.report() / "noise_sweep.svg"));
  }

  SUBCASE("a missing upstream names the stage to run") {
    const fs::path other = root / "elsewhere";
    const auto msg = error_of([&] {
      stage_calibrate({other / "cdfs"}, tree.cohort(), 0.9, PlottingPositions::mean, 1, other / "calib.json", opts);
    });
    CHECK(msg.find("run the cdf stage") != std::string::npos);

    const auto msg2 = error_of([&] {
      stage_sample(other / "model", tree.cohort(), {}, 4, 1, other / "samples", opts);
    });
    CHECK(msg2.find("run the train stage") != std::string::npos);
  }

  SUBCASE("report on a partial tree lists every missing artifact") {
    fs::remove(tree.eval() / "ranks.csv");
    fs::remove(tree.calibration());
    const auto msg = error_of([&] { stage_report(c, tree, opts); });
    CHECK(msg.find("ranks.csv") != std::string::npos);
    CHECK(msg.find("calib.json") != std::string::npos);
  }
}
