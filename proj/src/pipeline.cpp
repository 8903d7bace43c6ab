#include "volcal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "volcal/csv.hpp"
#include "volcal/error.hpp"
#include "volcal/eval.hpp"
#include "volcal/fs_util.hpp"
#include "volcal/manifest.hpp"
#include "volcal/mc_inference.hpp"
#include "volcal/net/weights_io.hpp"
#include "volcal/report.hpp"
#include "volcal/seeds.hpp"
#include "volcal/volume_io.hpp"
#include "volcal/volumetrics.hpp"

namespace volcal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ModelSpec::name() const {
  return std::string(net::to_string(variant)) + "_" + std::string(to_string(cls));
}

std::uint64_t cohort_seed(std::uint64_t root) { return derive_seed(root, "gen", "cohort"); }
std::uint64_t training_seed(std::uint64_t root, const ModelSpec& m) { return derive_seed(root, "train", m.name()); }
std::uint64_t sampling_seed(std::uint64_t root, const std::string& subject) {
  return derive_seed(root, "sample", subject);
}
std::uint64_t fold_seed(std::uint64_t root, TumourClass cls) { return derive_seed(root, "calibrate", to_string(cls)); }
std::uint64_t noise_seed(std::uint64_t root, const std::string& subject) { return derive_seed(root, "noise", subject); }

// ---------------------------------------------------------------- config

std::vector<ModelSpec> PipelineConfig::primary_models() const {
  std::vector<ModelSpec> out;
  for (auto c : classes) out.push_back({primary_variant, c});
  return out;
}

std::vector<ModelSpec> PipelineConfig::models() const {
  auto out = primary_models();
  for (auto v : baseline_variants) {
    for (auto c : baseline_classes) {
      const ModelSpec m{v, c};
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
  }
  return out;
}

void PipelineConfig::validate() const {
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (classes.empty()) throw ConfigError("models.classes must name at least one class");
  if (samples < 1) throw ConfigError("sample.T must be >= 1");
  if (map_samples < 1) throw ConfigError("sample.map_T must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("calibration.level must be in (0, 1)");
  for (double l : coverage_levels) {
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("calibration.coverage_levels must lie in (0, 1)");
  }
  if (noise_levels.empty()) throw ConfigError("eval.noise_levels must not be empty");
  for (double s : noise_levels) {
    if (!(s >= 0.0)) throw ConfigError("eval.noise_levels must be >= 0");
  }
  if (!(boundary_subject_threshold >= 0.0 && boundary_subject_threshold <= 1.0)) {
    throw ConfigError("eval.boundary_subject_threshold must be in [0, 1]");
  }
  if (training.max_epochs < 1 || training.patience < 1 || !(training.learning_rate > 0.0)) {
    throw ConfigError("train.max_epochs, train.patience and train.learning_rate must be positive");
  }
  cohort.phantom.validate();
  net::NetworkConfig probe = network;
  probe.variant = primary_variant;
  probe.input_channels = cohort.phantom.num_channels;
  probe.validate();
}

namespace {

const std::map<std::string, std::vector<std::string>> kConfigKeys{
    {"run", {"seed", "jobs", "out"}},
    {"cohort",
     {"count", "extra_test", "size", "channels", "whole_radius_min", "whole_radius_max", "core_fraction_min",
      "core_fraction_max", "active_fraction_min", "active_fraction_max", "aspect_jitter", "texture_noise_sd",
      "background_intensity", "contrast_in_sd"}},
    {"network",
     {"architecture", "filters", "dropout_p", "input_dropout_p", "hetero_seg_filters", "hetero_sigma_filters",
      "hetero_noise_samples"}},
    {"train", {"max_epochs", "patience", "learning_rate"}},
    {"models", {"primary_variant", "classes", "baseline_variants", "baseline_classes"}},
    {"sample", {"T", "map_T"}},
    {"calibration", {"level", "coverage_levels", "plotting_positions"}},
    {"eval", {"noise_levels", "noise_subject", "boundary_subject_threshold"}},
};

int to_int(std::int64_t v, const char* key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(std::string(key) + " is out of range");
  }
  return static_cast<int>(v);
}

std::vector<TumourClass> parse_classes(const std::vector<std::string>& names) {
  std::vector<TumourClass> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_tumour_class(n));
    } catch (const Error&) {
      throw ConfigError("unknown tumour class '" + n + "' (expected whole, core or active)");
    }
  }
  return out;
}

std::vector<std::string> class_names(const std::vector<TumourClass>& cs) {
  std::vector<std::string> out;
  for (auto c : cs) out.emplace_back(to_string(c));
  return out;
}

net::Variant parse_variant_cfg(const std::string& s) {
  try {
    return net::parse_variant(s);
  } catch (const Error&) {
    throw ConfigError("unknown variant '" + s + "' (expected default, drop_last, drop_all or hetero)");
  }
}

}  // namespace

PipelineConfig pipeline_config_from(const ConfigFile& f, const fs::path& base_dir) {
  f.check_keys(kConfigKeys);
  PipelineConfig c;
  c.seed = f.get_uint("run", "seed", c.seed);
  c.jobs = to_int(f.get_int("run", "jobs", c.jobs), "run.jobs");
  c.out = f.get_string("run", "out", c.out.string());
  if (c.out.is_relative() && !base_dir.empty()) c.out = base_dir / c.out;

  auto& ph = c.cohort.phantom;
  c.cohort.count = to_int(f.get_int("cohort", "count", c.cohort.count), "cohort.count");
  c.cohort.extra_test = to_int(f.get_int("cohort", "extra_test", c.cohort.extra_test), "cohort.extra_test");
  ph.size = to_int(f.get_int("cohort", "size", ph.size), "cohort.size");
  ph.num_channels = to_int(f.get_int("cohort", "channels", ph.num_channels), "cohort.channels");
  ph.whole_radius_range = {f.get_double("cohort", "whole_radius_min", ph.whole_radius_range.first),
                           f.get_double("cohort", "whole_radius_max", ph.whole_radius_range.second)};
  ph.core_fraction_range = {f.get_double("cohort", "core_fraction_min", ph.core_fraction_range.first),
                            f.get_double("cohort", "core_fraction_max", ph.core_fraction_range.second)};
  ph.active_fraction_range = {f.get_double("cohort", "active_fraction_min", ph.active_fraction_range.first),
                              f.get_double("cohort", "active_fraction_max", ph.active_fraction_range.second)};
  ph.aspect_jitter = f.get_double("cohort", "aspect_jitter", ph.aspect_jitter);
  ph.texture_noise_sd = f.get_double("cohort", "texture_noise_sd", ph.texture_noise_sd);
  ph.background_intensity = f.get_double("cohort", "background_intensity", ph.background_intensity);
  ph.contrast_in_sd = f.get_double("cohort", "contrast_in_sd", ph.contrast_in_sd);

  auto& n = c.network;
  try {
    n.architecture = net::parse_architecture(f.get_string("network", "architecture",
                                                          std::string(net::to_string(n.architecture))));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const auto filters = f.get_ints("network", "filters", {n.filters.begin(), n.filters.end()});
  if (filters.size() != 5) throw ConfigError("network.filters needs exactly 5 entries");
  for (int i = 0; i < 5; ++i) n.filters[i] = to_int(filters[i], "network.filters");
  n.dropout_p = f.get_double("network", "dropout_p", n.dropout_p);
  n.input_dropout_p = f.get_double("network", "input_dropout_p", n.input_dropout_p);
  n.hetero_seg_filters = to_int(f.get_int("network", "hetero_seg_filters", n.hetero_seg_filters),
                                "network.hetero_seg_filters");
  n.hetero_sigma_filters = to_int(f.get_int("network", "hetero_sigma_filters", n.hetero_sigma_filters),
                                  "network.hetero_sigma_filters");
  n.hetero_noise_samples = to_int(f.get_int("network", "hetero_noise_samples", n.hetero_noise_samples),
                                  "network.hetero_noise_samples");
  n.input_channels = ph.num_channels;

  c.training.max_epochs = to_int(f.get_int("train", "max_epochs", c.training.max_epochs), "train.max_epochs");
  c.training.patience = to_int(f.get_int("train", "patience", c.training.patience), "train.patience");
  c.training.learning_rate = f.get_double("train", "learning_rate", c.training.learning_rate);

  c.primary_variant = parse_variant_cfg(
      f.get_string("models", "primary_variant", std::string(net::to_string(c.primary_variant))));
  c.classes = parse_classes(f.get_strings("models", "classes", class_names(c.classes)));
  std::vector<std::string> bv;
  for (auto v : c.baseline_variants) bv.emplace_back(net::to_string(v));
  c.baseline_variants.clear();
  for (const auto& s : f.get_strings("models", "baseline_variants", bv)) c.baseline_variants.push_back(parse_variant_cfg(s));
  c.baseline_classes = parse_classes(f.get_strings("models", "baseline_classes", class_names(c.baseline_classes)));

  c.samples = to_int(f.get_int("sample", "T", c.samples), "sample.T");
  c.map_samples = to_int(f.get_int("sample", "map_T", c.map_samples), "sample.map_T");

  c.level = f.get_double("calibration", "level", c.level);
  c.coverage_levels = f.get_doubles("calibration", "coverage_levels", c.coverage_levels);
  try {
    c.positions = parse_plotting_positions(
        f.get_string("calibration", "plotting_positions", std::string(to_string(c.positions))));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }

  c.noise_levels = f.get_doubles("eval", "noise_levels", c.noise_levels);
  c.noise_subject = f.get_string("eval", "noise_subject", c.noise_subject);
  c.boundary_subject_threshold = f.get_double("eval", "boundary_subject_threshold", c.boundary_subject_threshold);
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from(ConfigFile::load(path), path.parent_path());
}

namespace {

json cohort_json(const CohortSpec& s) {
  const auto& p = s.phantom;
  return {{"count", s.count},
          {"extra_test", s.extra_test},
          {"size", p.size},
          {"channels", p.num_channels},
          {"whole_radius", {p.whole_radius_range.first, p.whole_radius_range.second}},
          {"core_fraction", {p.core_fraction_range.first, p.core_fraction_range.second}},
          {"active_fraction", {p.active_fraction_range.first, p.active_fraction_range.second}},
          {"aspect_jitter", p.aspect_jitter},
          {"texture_noise_sd", p.texture_noise_sd},
          {"background_intensity", p.background_intensity},
          {"contrast_in_sd", p.contrast_in_sd}};
}

json training_json(const net::TrainOptions& t) {
  return {{"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon}};
}

}  // namespace

json to_json(const PipelineConfig& c) {
  json bv = json::array();
  for (auto v : c.baseline_variants) bv.push_back(net::to_string(v));
  net::NetworkConfig n = c.network;
  n.variant = c.primary_variant;
  return {{"seed", c.seed},
          {"cohort", cohort_json(c.cohort)},
          {"network", net::to_json(n)},
          {"train", training_json(c.training)},
          {"primary_variant", net::to_string(c.primary_variant)},
          {"classes", class_names(c.classes)},
          {"baseline_variants", bv},
          {"baseline_classes", class_names(c.baseline_classes)},
          {"samples", c.samples},
          {"map_samples", c.map_samples},
          {"level", c.level},
          {"coverage_levels", c.coverage_levels},
          {"plotting_positions", to_string(c.positions)},
          {"noise_levels", c.noise_levels},
          {"noise_subject", c.noise_subject},
          {"boundary_subject_threshold", c.boundary_subject_threshold}};
}

// ---------------------------------------------------------------- threads

int effective_jobs(int requested) {
  int jobs = std::max(1, requested);
  if (const char* env = std::getenv("VOLCAL_THREADS"); env && *env) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) {
      throw ConfigError(std::string("VOLCAL_THREADS must be a positive integer, got '") + env + "'");
    }
    jobs = std::min<long>(jobs, cap);
  }
  return jobs;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  jobs = std::clamp(jobs, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    while (!failed.load()) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        failed.store(true);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------- cohort

const CohortEntry& Cohort::find(const std::string& id) const {
  for (const auto& e : subjects) {
    if (e.id == id) return e;
  }
  throw MissingArtifactError("subject '" + id + "' is not in the cohort at " + dir.string());
}

std::vector<CohortEntry> Cohort::in_split(Split s) const {
  std::vector<CohortEntry> out;
  for (const auto& e : subjects) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

Phantom Cohort::load(const CohortEntry& e) const {
  Phantom p;
  p.image = read_multichannel(dir / (e.id + "_image.vjson"));
  p.labels = read_labels(dir / (e.id + "_labels.vjson"));
  p.true_volumes = e.true_volumes;
  return p;
}

Cohort read_cohort(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "cohort.json" : path;
  if (!fs::exists(file)) {
    throw MissingArtifactError("missing " + file.string() + ": run the gen stage (volcal gen) first");
  }
  Cohort c;
  c.dir = file.parent_path();
  try {
    const json j = json::parse(read_file(file));
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("subjects")) {
      CohortEntry e;
      e.id = s.at("id").get<std::string>();
      e.seed = s.at("seed").get<std::uint64_t>();
      e.split = parse_split(s.at("split").get<std::string>());
      const auto& v = s.at("true_volumes");
      e.true_volumes = {v.at("whole").get<double>(), v.at("core").get<double>(), v.at("active").get<double>()};
      c.subjects.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- stage runner

namespace {

std::mutex log_mutex;

void log_line(const StageOptions& o, const std::string& s) {
  if (!o.log) return;
  std::lock_guard lock(log_mutex);
  *o.log << s << '\n';
  o.log->flush();
}

struct Upstream {
  fs::path dir;
  std::string stage;  // the stage that produces `dir`
};

fs::path relative_to(const fs::path& target, const fs::path& base) {
  const fs::path t = fs::absolute(target).lexically_normal();
  const fs::path b = fs::absolute(base).lexically_normal();
  fs::path r = t.lexically_relative(b);
  return r.empty() ? t : r;
}

// Lists every missing upstream manifest and extra required file at once.
void require(const std::vector<Upstream>& upstream, const std::vector<std::pair<fs::path, std::string>>& files) {
  std::vector<std::string> missing;
  for (const auto& u : upstream) {
    if (!fs::exists(u.dir / kManifestName)) {
      missing.push_back((u.dir / kManifestName).string() + " (run the " + u.stage + " stage)");
    }
  }
  for (const auto& [f, stage] : files) {
    if (!fs::exists(f)) missing.push_back(f.string() + " (run the " + stage + " stage)");
  }
  if (missing.empty()) return;
  std::string msg = "missing upstream artifacts:";
  for (const auto& m : missing) msg += "\n  " + m;
  throw MissingArtifactError(msg);
}

using StageBody = std::function<std::vector<fs::path>(RunManifest&)>;

StageOutcome run_stage(const std::string& stage, const fs::path& dir, const json& config, const json& seeds,
                       const std::vector<Upstream>& upstream, const StageOptions& opts, const StageBody& body,
                       const std::vector<std::pair<fs::path, std::string>>& required_files = {}) {
  require(upstream, required_files);
  std::vector<fs::path> inputs;
  for (const auto& u : upstream) inputs.push_back(relative_to(u.dir / kManifestName, dir));
  const std::string hash = config_hash({{"stage", stage}, {"config", config}, {"seeds", seeds}});

  StageOutcome outcome{stage, dir, false, {}};
  outcome.reason = staleness(dir, hash, dir, inputs);
  if (outcome.reason.empty()) {
    outcome.reason = "up to date";
    log_line(opts, "[" + stage + "] up to date (" + dir.string() + ")");
    return outcome;
  }
  log_line(opts, "[" + stage + "] running: " + outcome.reason);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m;
  m.stage = stage;
  m.command = opts.command;
  m.config = config;
  m.config_hash = hash;
  m.seeds = seeds;
  m.threads = opts.jobs;
  auto outputs = body(m);
  std::sort(outputs.begin(), outputs.end());
  m.outputs = digest_files(dir, outputs);
  m.inputs = digest_files(dir, inputs);
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir, m);
  outcome.executed = true;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", m.wall_clock_seconds);
  log_line(opts, "[" + stage + "] done in " + buf + " s");
  return outcome;
}

json stage_summary(const fs::path& dir) { return read_manifest(dir).summary; }

TumourClass summary_class(const fs::path& dir) {
  return parse_tumour_class(stage_summary(dir).at("class").get<std::string>());
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

fs::path recorded_cohort(const fs::path& stage_dir) {
  if (!fs::exists(stage_dir / kManifestName)) {
    throw MissingArtifactError("missing " + (stage_dir / kManifestName).string() +
                               "; pass --cohort or run the upstream stage first");
  }
  const auto s = stage_summary(stage_dir);
  if (!s.contains("cohort")) throw FormatError(stage_dir.string() + " does not record its cohort; pass --cohort");
  return (stage_dir / s.at("cohort").get<std::string>()).lexically_normal();
}

// ---------------------------------------------------------------- gen

StageOutcome stage_gen(const CohortSpec& spec_in, std::uint64_t root_seed, const fs::path& out,
                       const StageOptions& opts) {
  CohortSpec spec = spec_in;
  spec.seed = cohort_seed(root_seed);
  const json config = cohort_json(spec);
  const json seeds = {{"root", root_seed}, {"cohort", spec.seed}};
  return run_stage("gen", out, config, seeds, {}, opts, [&](RunManifest& m) {
    auto entries = plan_cohort(spec);
    const int n = static_cast<int>(entries.size());
    parallel_for(n, opts.jobs, [&](int i) {
      const Phantom p = generate_phantom(subject_spec(spec, i));
      entries[i].true_volumes = p.true_volumes;
      write_volume(p.image, out / (entries[i].id + "_image.vjson"));
      write_volume(p.labels, out / (entries[i].id + "_labels.vjson"));
    });

    json subjects = json::array();
    std::vector<fs::path> outputs{"cohort.json"};
    SplitCounts counts;
    double vmin = 0.0, vmax = 0.0;
    for (const auto& e : entries) {
      subjects.push_back({{"id", e.id},
                          {"seed", e.seed},
                          {"split", to_string(e.split)},
                          {"true_volumes",
                           {{"whole", e.true_volumes.whole},
                            {"core", e.true_volumes.core},
                            {"active", e.true_volumes.active}}},
                          {"image", e.id + "_image.vjson"},
                          {"labels", e.id + "_labels.vjson"}});
      for (const char* suffix : {"_image.vjson", "_image.vraw", "_labels.vjson", "_labels.vraw"}) {
        outputs.emplace_back(e.id + suffix);
      }
      (e.split == Split::train ? counts.train : e.split == Split::validation ? counts.validation : counts.test)++;
      vmin = vmin == 0.0 ? e.true_volumes.whole : std::min(vmin, e.true_volumes.whole);
      vmax = std::max(vmax, e.true_volumes.whole);
    }
    if (vmin <= 0.0 || vmax / vmin < 10.0) {
      throw ConfigError("generated whole-tumour volumes span less than one order of magnitude; widen "
                        "cohort.whole_radius_min/max");
    }
    const json doc = {{"seed", spec.seed}, {"root_seed", root_seed}, {"spec", config}, {"subjects", subjects}};
    write_text_atomic(out / "cohort.json", doc.dump(2) + "\n");
    m.summary = {{"train", counts.train},
                 {"validation", counts.validation},
                 {"test", counts.test},
                 {"whole_volume_min", vmin},
                 {"whole_volume_max", vmax}};
    return outputs;
  });
}

// ---------------------------------------------------------------- train

StageOutcome stage_train(const fs::path& cohort_dir, net::NetworkConfig network, const net::TrainOptions& training,
                         TumourClass cls, std::uint64_t root_seed, const fs::path& out, const StageOptions& opts) {
  const ModelSpec spec{network.variant, cls};
  network.rng_seed = training_seed(root_seed, spec);
  const json config = {{"network", net::to_json(network)}, {"train", training_json(training)}, {"class", to_string(cls)}};
  const json seeds = {{"root", root_seed}, {"network", network.rng_seed}};
  const std::string tag = "train " + spec.name();
  return run_stage("train", out, config, seeds, {{cohort_dir, "gen"}}, opts, [&](RunManifest& m) {
    const Cohort cohort = read_cohort(cohort_dir);
    auto load = [&](Split s) {
      const auto entries = cohort.in_split(s);
      std::vector<net::TrainingSubject> v(entries.size());
      parallel_for(static_cast<int>(entries.size()), opts.jobs, [&](int i) {
        const Phantom p = cohort.load(entries[i]);
        v[i] = net::make_training_subject(entries[i].id, p.image, hierarchical_masks(p.labels).get(cls));
      });
      return v;
    };
    const auto train_set = load(Split::train);
    const auto val_set = load(Split::validation);
    if (train_set.empty() || val_set.empty()) throw ConfigError("training needs train and validation subjects");
    network.input_channels = train_set.front().input.channels;

    net::TrainOptions o = training;
    o.on_epoch = [&](const net::EpochRecord& r, const net::NetworkWeights&) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s] epoch %d train %.5f val %.5f%s", tag.c_str(), r.epoch, r.train_loss,
                    r.val_loss, r.improved ? " *" : "");
      log_line(opts, buf);
    };
    const auto result = net::train(network, train_set, val_set, o);
    net::save_model(out, network, result.weights);
    write_text_atomic(out / "train_log.csv", net::training_log_csv(result));
    double best = 0.0;
    for (const auto& r : result.log) {
      if (r.epoch == result.best_epoch) best = r.val_loss;
    }
    m.summary = {{"class", to_string(cls)},
                 {"variant", net::to_string(network.variant)},
                 {"cohort", relative_to(cohort_dir, out).generic_string()},
                 {"best_epoch", result.best_epoch},
                 {"epochs_run", result.epochs_run},
                 {"early_stopped", result.early_stopped},
                 {"best_val_loss", best}};
    return std::vector<fs::path>{"weights.json", "weights.f32", "train_log.csv"};
  });
}

// ---------------------------------------------------------------- sample

StageOutcome stage_sample(const fs::path& model_dir, const fs::path& cohort_dir, std::vector<std::string> subjects,
                          int samples, std::uint64_t root_seed, const fs::path& out, const StageOptions& opts) {
  if (samples < 1) throw ParameterError("T must be >= 1");
  require({{cohort_dir, "gen"}, {model_dir, "train"}}, {});
  const Cohort cohort = read_cohort(cohort_dir);
  if (subjects.empty()) {
    for (const auto& e : cohort.subjects) {
      if (e.split != Split::train) subjects.push_back(e.id);
    }
  }
  for (const auto& s : subjects) cohort.find(s);
  const json model_summary = stage_summary(model_dir);
  const TumourClass cls = parse_tumour_class(model_summary.at("class").get<std::string>());
  const std::string variant = model_summary.at("variant").get<std::string>();
  const bool stochastic = net::parse_variant(variant) != net::Variant::standard;
  const int count = stochastic ? samples : 1;

  json seeds = {{"root", root_seed}};
  for (const auto& s : subjects) seeds[s] = sampling_seed(root_seed, s);
  const json config = {{"T", count}, {"subjects", subjects}};
  return run_stage("sample", out, config, seeds, {{cohort_dir, "gen"}, {model_dir, "train"}}, opts,
                   [&](RunManifest& m) {
                     const auto model = net::load_model(model_dir);
                     std::atomic<int> done{0};
                     const int n = static_cast<int>(subjects.size());
                     parallel_for(n, opts.jobs, [&](int i) {
                       const auto& id = subjects[i];
                       const auto image = read_multichannel(cohort.dir / (id + "_image.vjson"));
                       const std::uint64_t seed = sampling_seed(root_seed, id);
                       const auto set = mc_sample(model.weights, model.config, image, count, seed, id, cls);
                       write_sample_set(set, out / id, seed, variant);
                       log_line(opts, "[sample " + out.filename().string() + "] " + id + " (" +
                                          std::to_string(++done) + "/" + std::to_string(n) + ")");
                     });
                     std::vector<fs::path> outputs;
                     for (const auto& id : subjects) {
                       for (const char* suffix : {".vjson", ".vraw", ".json"}) outputs.emplace_back(id + suffix);
                       if (model.config.has_sigma_head()) {
                         outputs.emplace_back(id + ".sigma.vjson");
                         outputs.emplace_back(id + ".sigma.vraw");
                       }
                     }
                     m.summary = {{"class", to_string(cls)},
                                  {"variant", variant},
                                  {"T", count},
                                  {"subjects", subjects},
                                  {"cohort", relative_to(cohort_dir, out).generic_string()}};
                     return outputs;
                   });
}

// ---------------------------------------------------------------- cdf

namespace {

SampleSet leading_samples(const SampleSet& s, int k) {
  k = std::min(k, s.count());
  const std::size_t n = static_cast<std::size_t>(k) * s.voxels();
  std::vector<float> p(s.probs().begin(), s.probs().begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<float> sg;
  if (s.has_sigmas()) sg.assign(s.sigmas().begin(), s.sigmas().begin() + static_cast<std::ptrdiff_t>(n));
  return SampleSet(s.subject(), s.cls(), s.dims(), k, std::move(p), std::move(sg));
}

MultiChannelVolume variance_volume(const UncertaintyMaps& m) {
  const std::size_t n = m.mean.dims().voxels();
  std::vector<float> data(3 * n);
  for (std::size_t v = 0; v < n; ++v) {
    data[v] = static_cast<float>(m.var_epistemic.values[v]);
    data[n + v] = static_cast<float>(m.var_aleatoric.values[v]);
    data[2 * n + v] = static_cast<float>(m.var_total.values[v]);
  }
  return MultiChannelVolume(m.mean.dims(), 3, std::move(data));
}

}  // namespace

StageOutcome stage_cdf(const fs::path& samples_dir, const fs::path& cohort_dir, int map_samples, const fs::path& out,
                       const StageOptions& opts) {
  if (map_samples < 1) throw ParameterError("map_T must be >= 1");
  require({{cohort_dir, "gen"}, {samples_dir, "sample"}}, {});
  const json ss = stage_summary(samples_dir);
  const auto subjects = ss.at("subjects").get<std::vector<std::string>>();
  const TumourClass cls = parse_tumour_class(ss.at("class").get<std::string>());
  const auto grid = default_percentile_grid();
  const json config = {{"map_T", map_samples}, {"grid_points", grid.size()}, {"contour_threshold", 0.5}};
  return run_stage("cdf", out, config, json::object(), {{cohort_dir, "gen"}, {samples_dir, "sample"}}, opts,
                   [&](RunManifest& m) {
                     const Cohort cohort = read_cohort(cohort_dir);
                     const int n = static_cast<int>(subjects.size());
                     std::vector<std::vector<std::string>> rows(n);
                     parallel_for(n, opts.jobs, [&](int i) {
                       const auto& id = subjects[i];
                       const CohortEntry& e = cohort.find(id);
                       const auto set = read_sample_set(samples_dir / id);
                       const auto labels = read_labels(cohort.dir / (id + "_labels.vjson"));
                       const BinaryMask truth = hierarchical_masks(labels).get(cls);

                       write_cdf(volumetric_cdf(set, grid), out / (id + ".csv"));
                       const auto vols = sample_volumes(set);
                       CsvWriter vw({"sample", "volume"});
                       double sum = 0.0;
                       for (std::size_t t = 0; t < vols.size(); ++t) {
                         vw.row({std::to_string(t), fmt(vols[t])});
                         sum += vols[t];
                       }
                       vw.write(out / (id + "_volumes.csv"));
                       const Interval range = sample_range_interval(vols);

                       const ProbVolume mean = sample_mean(set);
                       const double d = dice(threshold(mean), truth);
                       const auto maps = total_variance(leading_samples(set, map_samples));
                       write_prob_volume(maps.mean, out / (id + "_mean.vjson"));
                       write_volume(variance_volume(maps), out / (id + "_var.vjson"));
                       const double bc = boundary_concentration(maps.var_total, truth);
                       rows[i] = {id,
                                  std::string(to_string(e.split)),
                                  fmt(e.true_volumes.get(cls)),
                                  fmt(sum / static_cast<double>(vols.size())),
                                  fmt(range.lo),
                                  fmt(range.hi),
                                  fmt(d),
                                  fmt(bc)};
                     });
                     CsvWriter summary(
                         {"subject", "split", "truth", "mean_volume", "min_volume", "max_volume", "dice", "boundary_fraction"});
                     std::vector<fs::path> outputs{"summary.csv"};
                     for (int i = 0; i < n; ++i) {
                       summary.row(rows[i]);
                       for (const char* suffix : {".csv", "_volumes.csv", "_mean.vjson", "_mean.vraw", "_var.vjson",
                                                  "_var.vraw"}) {
                         outputs.emplace_back(subjects[i] + suffix);
                       }
                     }
                     summary.write(out / "summary.csv");
                     m.summary = {{"class", to_string(cls)},
                                  {"variant", ss.at("variant")},
                                  {"T", ss.at("T")},
                                  {"subjects", subjects}};
                     return outputs;
                   });
}

// ---------------------------------------------------------------- calibrate

StageOutcome stage_calibrate(const std::vector<fs::path>& cdf_dirs, const fs::path& cohort_path, double level,
                             PlottingPositions positions, std::uint64_t root_seed, const fs::path& out_file,
                             const StageOptions& opts) {
  // accepts the cohort directory or its cohort.json
  fs::path cohort_dir = cohort_path;
  if (cohort_path.filename() == "cohort.json") {
    cohort_dir = cohort_path.has_parent_path() ? cohort_path.parent_path() : fs::path(".");
  }
  if (cdf_dirs.empty()) throw ParameterError("calibrate needs at least one CDF directory");
  if (!(level > 0.0 && level < 1.0)) throw ParameterError("level must be in (0, 1)");
  std::vector<Upstream> upstream{{cohort_dir, "gen"}};
  for (const auto& d : cdf_dirs) upstream.push_back({d, "cdf"});
  require(upstream, {});
  std::vector<TumourClass> classes;
  for (const auto& d : cdf_dirs) {
    const TumourClass c = summary_class(d);
    if (std::find(classes.begin(), classes.end(), c) != classes.end()) {
      throw ConfigError("two CDF directories share the class '" + std::string(to_string(c)) + "'");
    }
    classes.push_back(c);
  }
  json seeds = {{"root", root_seed}};
  for (auto c : classes) seeds[std::string(to_string(c))] = fold_seed(root_seed, c);
  const json config = {{"level", level}, {"plotting_positions", to_string(positions)}, {"file", out_file.filename().string()}};
  const fs::path dir = out_file.parent_path().empty() ? fs::path(".") : out_file.parent_path();
  return run_stage("calibrate", dir, config, seeds, upstream, opts, [&](RunManifest& m) {
    const Cohort cohort = read_cohort(cohort_dir);
    const auto validation = cohort.in_split(Split::validation);
    std::map<TumourClass, CalibrationMap> maps;
    CsvWriter folds({"class", "subject", "fold", "rank", "lo", "hi", "truth", "hit"});
    json summary = json::object();
    for (std::size_t k = 0; k < cdf_dirs.size(); ++k) {
      const TumourClass c = classes[k];
      std::vector<VolumetricCdf> cdfs;
      std::vector<double> truths;
      for (const auto& e : validation) {
        const fs::path p = cdf_dirs[k] / (e.id + ".csv");
        if (!fs::exists(p)) {
          throw MissingArtifactError("missing " + p.string() + ": validation subjects need CDFs (run the cdf stage)");
        }
        cdfs.push_back(read_cdf(p, e.id, c));
        truths.push_back(e.true_volumes.get(c));
      }
      const auto r = threefold_validation_calibration(cdfs, truths, level, fold_seed(root_seed, c), c, positions);
      int hits = 0;
      for (std::size_t i = 0; i < validation.size(); ++i) {
        const bool hit = r.intervals[i].contains(truths[i]);
        hits += hit;
        folds.row({std::string(to_string(c)), validation[i].id, std::to_string(r.fold[i]), fmt(r.ranks[i]),
                   fmt(r.intervals[i].lo), fmt(r.intervals[i].hi), fmt(truths[i]), hit ? "1" : "0"});
      }
      maps[c] = r.pooled;
      summary[std::string(to_string(c))] = {{"a", r.pooled.a},
                                            {"b", r.pooled.b},
                                            {"n", r.pooled.n},
                                            {"fold_coverage", static_cast<double>(hits) / validation.size()}};
    }
    write_calibration(maps, out_file);
    folds.write(dir / "folds.csv");
    m.summary = summary;
    return std::vector<fs::path>{out_file.filename(), "folds.csv"};
  });
}

// ---------------------------------------------------------------- evaluate

namespace {

std::string pick_noise_subject(const PipelineConfig& config, const Cohort& cohort) {
  if (!config.noise_subject.empty()) {
    cohort.find(config.noise_subject);
    return config.noise_subject;
  }
  const auto test = cohort.in_split(Split::test);
  if (test.empty()) throw ConfigError("the cohort has no test subjects");
  return test.front().id;
}

std::vector<double> read_sample_volumes(const fs::path& p) {
  const auto t = read_csv(p);
  std::vector<double> v;
  for (std::size_t r = 0; r < t.rows.size(); ++r) v.push_back(t.number(r, "volume"));
  return v;
}

MultiChannelVolume single_channel(const std::vector<double>& v, Dims d) {
  return MultiChannelVolume(d, 1, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

StageOutcome stage_evaluate(const PipelineConfig& config, const TreeLayout& tree, const StageOptions& opts) {
  std::vector<Upstream> upstream{{tree.cohort(), "gen"}, {tree.calibration_dir(), "calibrate"}};
  for (const auto& m : config.models()) upstream.push_back({tree.cdfs(m), "cdf"});
  for (const auto& m : config.primary_models()) upstream.push_back({tree.model(m), "train"});
  require(upstream, {{tree.calibration(), "calibrate"}});
  const Cohort cohort = read_cohort(tree.cohort());
  const std::string noise_id = pick_noise_subject(config, cohort);
  const json cfg = {{"level", config.level},
                    {"coverage_levels", config.coverage_levels},
                    {"noise_levels", config.noise_levels},
                    {"noise_subject", noise_id},
                    {"T", config.samples},
                    {"boundary_subject_threshold", config.boundary_subject_threshold},
                    {"classes", class_names(config.classes)},
                    {"models", [&] {
                       json a = json::array();
                       for (const auto& m : config.models()) a.push_back(m.name());
                       return a;
                     }()}};
  const json seeds = {{"root", config.seed},
                      {"noise", noise_seed(config.seed, noise_id)},
                      {"sample", sampling_seed(config.seed, noise_id)}};

  return run_stage("evaluate", tree.eval(), cfg, seeds, upstream, opts, [&](RunManifest& m) {
    const fs::path out = tree.eval();
    const auto maps = read_calibration(tree.calibration());
    const auto test = cohort.in_split(Split::test);
    std::vector<fs::path> outputs;
    json summary = {{"noise_subject", noise_id}, {"coverage", json::object()}, {"dice", json::object()}};

    CsvWriter intervals({"class", "subject", "truth", "mean_volume", "rank", "calibrated_rank", "range_lo", "range_hi",
                         "raw_lo", "raw_hi", "cal_lo", "cal_hi", "range_hit", "raw_hit", "cal_hit"});
    CsvWriter coverage_csv({"class", "level", "method", "n", "hits", "coverage", "mean_width"});
    CsvWriter ranks({"class", "subject", "rank_pre", "rank_post"});
    CsvWriter boundary({"class", "n", "subjects_passing", "fraction_passing", "subject_threshold"});
    for (const auto& model : config.primary_models()) {
      const TumourClass c = model.cls;
      const std::string cname(to_string(c));
      const auto it = maps.find(c);
      if (it == maps.end()) {
        throw MissingArtifactError(tree.calibration().string() + " has no map for class " + cname +
                                   " (rerun the calibrate stage)");
      }
      const CalibrationMap& map = it->second;
      const CalibrationMap identity{1.0, 0.0, c};
      const fs::path cdir = tree.cdfs(model);
      std::vector<VolumetricCdf> cdfs;
      std::vector<std::vector<double>> vols;
      std::vector<double> truths;
      std::vector<std::string> ids;
      for (const auto& e : test) {
        cdfs.push_back(read_cdf(cdir / (e.id + ".csv"), e.id, c));
        vols.push_back(read_sample_volumes(cdir / (e.id + "_volumes.csv")));
        truths.push_back(e.true_volumes.get(c));
        ids.push_back(e.id);
      }
      for (double level : config.coverage_levels) {
        std::vector<Interval> cal, raw, range;
        for (std::size_t i = 0; i < cdfs.size(); ++i) {
          cal.push_back(calibrated_interval(cdfs[i], map, level));
          raw.push_back(calibrated_interval(cdfs[i], identity, level));
          range.push_back(sample_range_interval(vols[i]));
        }
        for (auto [method, iv] : {std::pair<const char*, const std::vector<Interval>*>{"calibrated", &cal},
                                  {"uncalibrated", &raw},
                                  {"sample_range", &range}}) {
          const auto rep = coverage(*iv, truths, c, level, ids);
          coverage_csv.row({cname, fmt(level), method, std::to_string(rep.n), std::to_string(rep.hits),
                            fmt(rep.coverage), fmt(rep.mean_width)});
          if (level == config.level) summary["coverage"][cname][method] = rep.coverage;
        }
      }
      for (std::size_t i = 0; i < cdfs.size(); ++i) {
        const Interval cal = calibrated_interval(cdfs[i], map, config.level);
        const Interval raw = calibrated_interval(cdfs[i], identity, config.level);
        const Interval range = sample_range_interval(vols[i]);
        double mean = 0.0;
        for (double v : vols[i]) mean += v;
        mean /= static_cast<double>(vols[i].size());
        const double rank = cdf_rank(cdfs[i], truths[i]);
        const double post = std::clamp(map.apply(rank), 0.0, 1.0);
        intervals.row({cname, ids[i], fmt(truths[i]), fmt(mean), fmt(rank), fmt(post), fmt(range.lo), fmt(range.hi),
                       fmt(raw.lo), fmt(raw.hi), fmt(cal.lo), fmt(cal.hi), range.contains(truths[i]) ? "1" : "0",
                       raw.contains(truths[i]) ? "1" : "0", cal.contains(truths[i]) ? "1" : "0"});
        ranks.row({cname, ids[i], fmt(rank), fmt(post)});
      }

      const auto summary_csv = read_csv(cdir / "summary.csv");
      int n = 0, passing = 0;
      for (std::size_t r = 0; r < summary_csv.rows.size(); ++r) {
        if (summary_csv.cell(r, "split") != "test") continue;
        const double f = summary_csv.number(r, "boundary_fraction");
        if (std::isnan(f)) continue;
        ++n;
        passing += f >= config.boundary_subject_threshold;
      }
      boundary.row({cname, std::to_string(n), std::to_string(passing),
                    fmt(n ? static_cast<double>(passing) / n : 0.0), fmt(config.boundary_subject_threshold)});
    }
    intervals.write(out / "intervals.csv");
    coverage_csv.write(out / "coverage.csv");
    ranks.write(out / "ranks.csv");
    boundary.write(out / "boundary.csv");
    outputs.insert(outputs.end(), {"intervals.csv", "coverage.csv", "ranks.csv", "boundary.csv"});

    CsvWriter dice_csv({"variant", "class", "subject", "dice"});
    CsvWriter dice_summary({"variant", "class", "n", "mean_dice", "min_dice"});
    for (const auto& model : config.models()) {
      const auto t = read_csv(tree.cdfs(model) / "summary.csv");
      double sum = 0.0, lo = 1.0;
      int n = 0;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.cell(r, "split") != "test") continue;
        const double d = t.number(r, "dice");
        dice_csv.row({std::string(net::to_string(model.variant)), std::string(to_string(model.cls)), t.cell(r, "subject"),
                      fmt(d)});
        sum += d;
        lo = std::min(lo, d);
        ++n;
      }
      const double mean = n ? sum / n : 0.0;
      dice_summary.row({std::string(net::to_string(model.variant)), std::string(to_string(model.cls)),
                        std::to_string(n), fmt(mean), fmt(lo)});
      summary["dice"][model.name()] = mean;
    }
    dice_csv.write(out / "dice.csv");
    dice_summary.write(out / "dice_summary.csv");
    outputs.insert(outputs.end(), {"dice.csv", "dice_summary.csv"});

    // Noise robustness on one subject, every primary class.
    const Phantom subject = cohort.load(cohort.find(noise_id));
    const auto primary = config.primary_models();
    std::vector<std::vector<NoiseLevelResult>> sweeps(primary.size());
    parallel_for(static_cast<int>(primary.size()), opts.jobs, [&](int k) {
      const auto model = net::load_model(tree.model(primary[k]));
      NoiseSweepOptions o;
      o.sigma_pcts = config.noise_levels;
      o.samples = config.samples;
      o.sample_seed = sampling_seed(config.seed, noise_id);
      o.noise_seed = noise_seed(config.seed, noise_id);
      o.level = config.level;
      sweeps[k] = noise_sweep(model.weights, model.config, subject, primary[k].cls, maps.at(primary[k].cls), o);
      log_line(opts, "[evaluate] noise sweep " + primary[k].name() + " done");
    });
    fs::create_directories(out / "noise");
    CsvWriter noise({"class", "subject", "sigma_pct", "dice", "mean_volume", "truth", "lo", "hi", "contains",
                     "mean_var_epistemic", "max_var_epistemic"});
    for (std::size_t k = 0; k < primary.size(); ++k) {
      const std::string cname(to_string(primary[k].cls));
      for (std::size_t l = 0; l < sweeps[k].size(); ++l) {
        const auto& r = sweeps[k][l];
        const auto& var = r.maps.var_epistemic.values;
        double mean_var = 0.0, max_var = 0.0;
        for (double v : var) {
          mean_var += v;
          max_var = std::max(max_var, v);
        }
        mean_var /= static_cast<double>(var.size());
        noise.row({cname, noise_id, fmt(r.sigma_pct), fmt(r.dice), fmt(r.mean_volume), fmt(r.truth),
                   fmt(r.interval.lo), fmt(r.interval.hi), r.interval.contains(r.truth) ? "1" : "0", fmt(mean_var),
                   fmt(max_var)});
        const std::string stem = cname + "_level" + std::to_string(l);
        write_prob_volume(r.maps.mean, out / "noise" / (stem + "_mean.vjson"));
        write_volume(single_channel(r.maps.var_epistemic.values, r.maps.mean.dims()),
                     out / "noise" / (stem + "_var.vjson"));
        for (const char* suffix : {"_mean.vjson", "_mean.vraw", "_var.vjson", "_var.vraw"}) {
          outputs.push_back(fs::path("noise") / (stem + suffix));
        }
      }
    }
    noise.write(out / "noise_sweep.csv");
    outputs.push_back("noise_sweep.csv");
    m.summary = summary;
    return outputs;
  });
}

// ---------------------------------------------------------------- report

StageOutcome stage_report(const PipelineConfig& config, const TreeLayout& tree, const StageOptions& opts) {
  std::vector<Upstream> upstream{{tree.cohort(), "gen"}, {tree.calibration_dir(), "calibrate"}, {tree.eval(), "evaluate"}};
  for (const auto& m : config.primary_models()) {
    upstream.push_back({tree.samples(m), "sample"});
    upstream.push_back({tree.cdfs(m), "cdf"});
  }
  std::vector<std::pair<fs::path, std::string>> files{{tree.calibration(), "calibrate"}};
  for (const char* f : {"intervals.csv", "coverage.csv", "ranks.csv", "noise_sweep.csv", "dice_summary.csv",
                        "boundary.csv"}) {
    files.emplace_back(tree.eval() / f, "evaluate");
  }
  // The noise subject is only known once evaluate has run.
  std::string noise_id;
  if (fs::exists(tree.eval() / kManifestName)) {
    noise_id = stage_summary(tree.eval()).value("noise_subject", std::string());
    for (const auto& m : config.primary_models()) {
      files.emplace_back(tree.cdfs(m) / (noise_id + "_mean.vjson"), "cdf");
      files.emplace_back(tree.cdfs(m) / (noise_id + "_var.vjson"), "cdf");
      files.emplace_back(tree.samples(m) / (noise_id + ".vjson"), "sample");
    }
  }
  require(upstream, files);
  const json cfg = {{"classes", class_names(config.classes)}, {"level", config.level}, {"rank_bins", 10}};
  return run_stage(
      "report", tree.report(), cfg, json::object(), upstream, opts,
      [&](RunManifest& m) {
        ReportInputs in;
        in.tree = tree;
        in.classes = config.classes;
        in.primary = config.primary_models();
        in.noise_subject = noise_id;
        in.level = config.level;
        const auto written = write_report(in, tree.report());
        m.summary = written.summary;
        return written.files;
      },
      files);
}

// ---------------------------------------------------------------- pipeline

std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const StageOptions& opts_in) {
  config.validate();
  StageOptions opts = opts_in;
  opts.jobs = effective_jobs(opts.jobs);
  const TreeLayout tree{config.out};
  fs::create_directories(tree.root);
  std::vector<StageOutcome> outcomes;
  const auto t0 = std::chrono::steady_clock::now();

  outcomes.push_back(stage_gen(config.cohort, config.seed, tree.cohort(), opts));
  for (const auto& m : config.models()) {
    net::NetworkConfig n = config.network;
    n.variant = m.variant;
    outcomes.push_back(stage_train(tree.cohort(), n, config.training, m.cls, config.seed, tree.model(m), opts));
  }
  for (const auto& m : config.models()) {
    outcomes.push_back(stage_sample(tree.model(m), tree.cohort(), {}, config.samples, config.seed, tree.samples(m), opts));
    outcomes.push_back(stage_cdf(tree.samples(m), tree.cohort(), config.map_samples, tree.cdfs(m), opts));
  }
  std::vector<fs::path> cdf_dirs;
  for (const auto& m : config.primary_models()) cdf_dirs.push_back(tree.cdfs(m));
  outcomes.push_back(stage_calibrate(cdf_dirs, tree.cohort(), config.level, config.positions, config.seed,
                                     tree.calibration(), opts));
  outcomes.push_back(stage_evaluate(config, tree, opts));
  outcomes.push_back(stage_report(config, tree, opts));

  // Run-level record: the resolved config and what each stage did.
  RunManifest run;
  run.stage = "pipeline";
  run.command = opts.command;
  run.config = to_json(config);
  run.config_hash = config_hash(run.config);
  run.seeds = {{"root", config.seed}};
  run.threads = opts.jobs;
  json stages = json::array();
  for (const auto& o : outcomes) {
    stages.push_back({{"stage", o.stage},
                      {"dir", relative_to(o.dir, tree.root).generic_string()},
                      {"executed", o.executed},
                      {"reason", o.reason}});
    run.inputs.push_back({relative_to(o.dir / kManifestName, tree.root).generic_string(),
                          sha256_file(o.dir / kManifestName)});
  }
  run.summary = {{"stages", stages}};
  run.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(tree.root, run);
  return outcomes;
}

}  // namespace volcal
