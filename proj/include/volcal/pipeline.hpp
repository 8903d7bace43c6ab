#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcal/calibration.hpp"
#include "volcal/config_file.hpp"
#include "volcal/net/config.hpp"
#include "volcal/net/train.hpp"
#include "volcal/phantom.hpp"

namespace volcal {

// One trained network: a stochasticity variant for one hierarchical class.
struct ModelSpec {
  net::Variant variant = net::Variant::drop_all;
  TumourClass cls = TumourClass::whole;

  // "<variant>_<class>", e.g. "drop_all_whole".
  std::string name() const;
  bool operator==(const ModelSpec&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 20190;
  int jobs = 1;
  std::filesystem::path out = "volcal-run";

  CohortSpec cohort;
  net::NetworkConfig network;  // variant and rng_seed are set per model
  net::TrainOptions training;

  // Calibrated, evaluated and reported for every class in `classes`.
  net::Variant primary_variant = net::Variant::drop_all;
  std::vector<TumourClass> classes{TumourClass::whole, TumourClass::core, TumourClass::active};
  // Extra variants trained and sampled for the Dice comparison only.
  std::vector<net::Variant> baseline_variants{net::Variant::standard};
  std::vector<TumourClass> baseline_classes{TumourClass::whole};

  int samples = 200;     // forward passes per subject for volumetric CDFs
  int map_samples = 20;  // leading passes used for the variance maps

  double level = 0.9;
  std::vector<double> coverage_levels{0.5, 0.8, 0.9, 0.95};
  PlottingPositions positions = PlottingPositions::mean;

  std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.4};
  std::string noise_subject;  // empty: first test subject
  // A subject's high-variance voxels count as boundary-concentrated when at
  // least this fraction lies within 2 voxels of the label boundary.
  double boundary_subject_threshold = 0.9;

  std::vector<ModelSpec> models() const;
  std::vector<ModelSpec> primary_models() const;
  void validate() const;
};

// Reads every section of the config grammar; unknown sections or keys are
// errors. Relative `run.out` resolves against `base_dir`.
PipelineConfig pipeline_config_from(const ConfigFile& file, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& c);

// Canonical artifact tree under one root.
struct TreeLayout {
  std::filesystem::path root;

  std::filesystem::path cohort() const { return root / "cohort"; }
  std::filesystem::path model(const ModelSpec& m) const { return root / "models" / m.name(); }
  std::filesystem::path samples(const ModelSpec& m) const { return root / "samples" / m.name(); }
  std::filesystem::path cdfs(const ModelSpec& m) const { return root / "cdfs" / m.name(); }
  std::filesystem::path calibration_dir() const { return root / "calib"; }
  std::filesystem::path calibration() const { return calibration_dir() / "calib.json"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path report() const { return root / "report"; }
};

struct StageOptions {
  int jobs = 1;
  std::string command;
  std::ostream* log = nullptr;
};

struct StageOutcome {
  std::string stage;
  std::filesystem::path dir;
  bool executed = false;
  std::string reason;  // why it ran, or "up to date"
};

// `requested` capped by VOLCAL_THREADS (when set) and floored at 1.
int effective_jobs(int requested);

// Runs fn(0..n-1) on up to `jobs` threads. The first failure (lowest index)
// is rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// ---- cohort on disk ----

struct Cohort {
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  std::vector<CohortEntry> subjects;

  const CohortEntry& find(const std::string& id) const;
  std::vector<CohortEntry> in_split(Split s) const;
  Phantom load(const CohortEntry& e) const;
};

// `path` may be the cohort directory or its cohort.json.
Cohort read_cohort(const std::filesystem::path& path);

// ---- stages ----
// Each stage writes into its own directory together with a manifest, and is
// skipped when that manifest shows it is up to date. A missing upstream
// manifest raises MissingArtifactError naming the stage that produces it.

StageOutcome stage_gen(const CohortSpec& spec, std::uint64_t root_seed, const std::filesystem::path& out,
                       const StageOptions& opts);

StageOutcome stage_train(const std::filesystem::path& cohort, net::NetworkConfig network,
                         const net::TrainOptions& training, TumourClass cls, std::uint64_t root_seed,
                         const std::filesystem::path& out, const StageOptions& opts);

// Cohort directory recorded by a train or sample stage.
std::filesystem::path recorded_cohort(const std::filesystem::path& stage_dir);

// Empty `subjects` samples the validation and test splits.
StageOutcome stage_sample(const std::filesystem::path& model, const std::filesystem::path& cohort,
                          std::vector<std::string> subjects, int samples, std::uint64_t root_seed,
                          const std::filesystem::path& out, const StageOptions& opts);

StageOutcome stage_cdf(const std::filesystem::path& samples, const std::filesystem::path& cohort,
                       int map_samples, const std::filesystem::path& out, const StageOptions& opts);

// One CDF directory per class; the map for each class is fitted on that
// class's validation subjects with three-fold validation.
StageOutcome stage_calibrate(const std::vector<std::filesystem::path>& cdf_dirs,
                             const std::filesystem::path& cohort, double level, PlottingPositions positions,
                             std::uint64_t root_seed, const std::filesystem::path& out_file,
                             const StageOptions& opts);

StageOutcome stage_evaluate(const PipelineConfig& config, const TreeLayout& tree, const StageOptions& opts);
StageOutcome stage_report(const PipelineConfig& config, const TreeLayout& tree, const StageOptions& opts);

// Every stage in dependency order; returns one outcome per stage.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const StageOptions& opts);

// Seeds, in one place so that stages can be rerun in isolation.
std::uint64_t cohort_seed(std::uint64_t root);
std::uint64_t training_seed(std::uint64_t root, const ModelSpec& m);
std::uint64_t sampling_seed(std::uint64_t root, const std::string& subject);
std::uint64_t fold_seed(std::uint64_t root, TumourClass cls);
std::uint64_t noise_seed(std::uint64_t root, const std::string& subject);

}  // namespace volcal
