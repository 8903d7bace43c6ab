// volcal: command-line front end for the calibration pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volcal/error.hpp"
#include "volcal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace volcal;

namespace {

// Shared by every subcommand: an optional config file, then per-flag overrides.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool quiet = false;

  void attach(CLI::App* app, bool with_seed = true) {
    app->add_option("--config", config, "pipeline config file (flags override its values)")->check(CLI::ExistingFile);
    if (with_seed) app->add_option("--seed", seed, "root seed");
    app->add_option("--jobs", jobs, "worker threads (capped by VOLCAL_THREADS)");
    app->add_flag("-q,--quiet", quiet, "suppress progress output");
  }

  PipelineConfig load() const {
    PipelineConfig c = config.empty() ? PipelineConfig{} : load_pipeline_config(config);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    return c;
  }

  StageOptions options(const PipelineConfig& c, const std::string& command) const {
    return StageOptions{effective_jobs(c.jobs), command, quiet ? nullptr : &std::cerr};
  }
};

template <class F>
auto as_config_error(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

TumourClass class_flag(const std::string& s) { return as_config_error([&] { return parse_tumour_class(s); }); }
net::Variant variant_flag(const std::string& s) { return as_config_error([&] { return net::parse_variant(s); }); }

std::string joined(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

void print_outcomes(const std::vector<StageOutcome>& outcomes, bool quiet) {
  if (quiet) return;
  for (const auto& o : outcomes) {
    std::cerr << "  " << o.stage << (o.executed ? "  ran      " : "  skipped  ") << o.dir.string() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volcal: calibrated volumetric uncertainty from MC-dropout segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("volcal 0.1.0"));
  const std::string command = joined(argc, argv);

  // gen
  Common gen_c;
  std::optional<int> gen_count, gen_size, gen_extra;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate the phantom cohort");
  gen_c.attach(gen);
  gen->add_option("--count", gen_count, "number of subjects in the 70:20:10 split");
  gen->add_option("--extra-test", gen_extra, "additional held-out test subjects");
  gen->add_option("--size", gen_size, "cube edge length in voxels");
  gen->add_option("--out", gen_out, "cohort directory")->required();

  // train
  Common tr_c;
  std::string tr_variant, tr_class = "whole", tr_cohort, tr_out;
  std::optional<int> tr_epochs, tr_patience;
  std::optional<double> tr_lr;
  auto* train = app.add_subcommand("train", "train one network");
  tr_c.attach(train);
  train->add_option("--variant", tr_variant, "default, drop_last, drop_all or hetero");
  train->add_option("--class", tr_class, "whole, core or active")->capture_default_str();
  train->add_option("--cohort", tr_cohort, "cohort directory")->required();
  train->add_option("--out", tr_out, "model directory")->required();
  train->add_option("--max-epochs", tr_epochs);
  train->add_option("--patience", tr_patience);
  train->add_option("--learning-rate", tr_lr);

  // sample
  Common sa_c;
  std::string sa_model, sa_cohort, sa_out;
  std::vector<std::string> sa_subjects;
  std::optional<int> sa_T;
  auto* sample = app.add_subcommand("sample", "draw MC forward passes");
  sa_c.attach(sample);
  sample->add_option("--model", sa_model, "model directory")->required();
  sample->add_option("--cohort", sa_cohort, "cohort directory (default: the one the model was trained on)");
  sample->add_option("--subject", sa_subjects, "subject id (repeatable; default: validation and test splits)");
  sample->add_option("--T", sa_T, "forward passes per subject");
  sample->add_option("--out", sa_out, "samples directory")->required();

  // cdf
  Common cd_c;
  std::string cd_samples, cd_cohort, cd_out;
  std::optional<int> cd_map_T;
  auto* cdf = app.add_subcommand("cdf", "volumetric CDFs and variance maps");
  cd_c.attach(cdf, false);
  cdf->add_option("--samples", cd_samples, "samples directory")->required();
  cdf->add_option("--cohort", cd_cohort, "cohort directory (default: the one the samples came from)");
  cdf->add_option("--map-T", cd_map_T, "leading passes used for variance maps");
  cdf->add_option("--out", cd_out, "CDF directory")->required();

  // calibrate
  Common ca_c;
  std::vector<std::string> ca_cdfs;
  std::string ca_truths, ca_out, ca_positions;
  std::optional<double> ca_level;
  auto* calibrate = app.add_subcommand("calibrate", "fit the affine rank calibration per class");
  ca_c.attach(calibrate);
  calibrate->add_option("--cdfs", ca_cdfs, "CDF directory, one per class (repeatable)")->required();
  calibrate->add_option("--truths", ca_truths, "cohort.json or cohort directory")->required();
  calibrate->add_option("--out", ca_out, "output calib.json")->required();
  calibrate->add_option("--level", ca_level, "nominal interval level for fold coverage");
  calibrate->add_option("--plotting-positions", ca_positions, "mean or midpoint");

  // evaluate / report / pipeline
  Common ev_c, re_c, pi_c;
  std::string ev_root, re_root, pi_out, ev_noise_subject;
  std::optional<int> pi_T;
  auto* evaluate = app.add_subcommand("evaluate", "coverage, ranks, Dice, boundary and noise sweep");
  ev_c.attach(evaluate);
  evaluate->add_option("--root", ev_root, "artifact tree root (default: run.out from the config)");
  evaluate->add_option("--noise-subject", ev_noise_subject, "subject for the noise sweep");
  auto* report = app.add_subcommand("report", "CSV and SVG bundle");
  re_c.attach(report, false);
  report->add_option("--root", re_root, "artifact tree root (default: run.out from the config)");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage, skipping those that are up to date");
  pi_c.attach(pipeline);
  pipeline->add_option("--out", pi_out, "artifact tree root");
  pipeline->add_option("--T", pi_T, "forward passes per subject");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto c = gen_c.load();
      if (gen_count) c.cohort.count = *gen_count;
      if (gen_extra) c.cohort.extra_test = *gen_extra;
      if (gen_size) c.cohort.phantom.size = *gen_size;
      c.validate();
      stage_gen(c.cohort, c.seed, gen_out, gen_c.options(c, command));
    } else if (train->parsed()) {
      auto c = tr_c.load();
      if (!tr_variant.empty()) c.primary_variant = variant_flag(tr_variant);
      if (tr_epochs) c.training.max_epochs = *tr_epochs;
      if (tr_patience) c.training.patience = *tr_patience;
      if (tr_lr) c.training.learning_rate = *tr_lr;
      c.validate();
      net::NetworkConfig network = c.network;
      network.variant = c.primary_variant;
      stage_train(tr_cohort, network, c.training, class_flag(tr_class), c.seed, tr_out, tr_c.options(c, command));
    } else if (sample->parsed()) {
      auto c = sa_c.load();
      if (sa_T) c.samples = *sa_T;
      c.validate();
      const fs::path cohort = sa_cohort.empty() ? recorded_cohort(sa_model) : fs::path(sa_cohort);
      stage_sample(sa_model, cohort, sa_subjects, c.samples, c.seed, sa_out, sa_c.options(c, command));
    } else if (cdf->parsed()) {
      auto c = cd_c.load();
      if (cd_map_T) c.map_samples = *cd_map_T;
      c.validate();
      const fs::path cohort = cd_cohort.empty() ? recorded_cohort(cd_samples) : fs::path(cd_cohort);
      stage_cdf(cd_samples, cohort, c.map_samples, cd_out, cd_c.options(c, command));
    } else if (calibrate->parsed()) {
      auto c = ca_c.load();
      if (ca_level) c.level = *ca_level;
      if (!ca_positions.empty()) {
        c.positions = as_config_error([&] { return parse_plotting_positions(ca_positions); });
      }
      c.validate();
      std::vector<fs::path> dirs(ca_cdfs.begin(), ca_cdfs.end());
      stage_calibrate(dirs, ca_truths, c.level, c.positions, c.seed, ca_out, ca_c.options(c, command));
    } else if (evaluate->parsed()) {
      auto c = ev_c.load();
      if (!ev_root.empty()) c.out = ev_root;
      if (!ev_noise_subject.empty()) c.noise_subject = ev_noise_subject;
      c.validate();
      stage_evaluate(c, TreeLayout{c.out}, ev_c.options(c, command));
    } else if (report->parsed()) {
      auto c = re_c.load();
      if (!re_root.empty()) c.out = re_root;
      c.validate();
      stage_report(c, TreeLayout{c.out}, re_c.options(c, command));
    } else if (pipeline->parsed()) {
      auto c = pi_c.load();
      if (!pi_out.empty()) c.out = pi_out;
      if (pi_T) c.samples = *pi_T;
      c.validate();
      print_outcomes(run_pipeline(c, pi_c.options(c, command)), pi_c.quiet);
    }
  } catch (const std::exception& e) {
    std::cerr << "volcal: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
