// Acceptance suite: one PASS/FAIL line per criterion. Criteria 5, 6, 9 and 10
// read the artifact tree of a full pipeline run, which is produced (or found
// up to date) first; criterion 11 runs the mini config twice from scratch.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "volcal/calibration.hpp"
#include "volcal/csv.hpp"
#include "volcal/error.hpp"
#include "volcal/manifest.hpp"
#include "volcal/mc_inference.hpp"
#include "volcal/net/loss.hpp"
#include "volcal/net/model.hpp"
#include "volcal/net/train.hpp"
#include "volcal/phantom.hpp"
#include "volcal/pipeline.hpp"
#include "volcal/volumetrics.hpp"

using namespace volcal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  json record = json::object();
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

SampleSet random_sample_set(std::mt19937_64& rng, int count) {
  std::uniform_int_distribution<int> side(1, 6);
  const Dims d{side(rng), side(rng), side(rng)};
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> probs(static_cast<std::size_t>(count) * d.voxels());
  const int mode = static_cast<int>(rng() % 4);
  for (auto& p : probs) {
    switch (mode) {
      case 0: p = u(rng); break;
      case 1: p = 0.999f + 0.001f * u(rng); break;     // near-saturated: cancellation stress
      case 2: p = (rng() & 1) ? 1.0f : 0.0f; break;    // binary passes
      default: p = std::round(u(rng) * 4.0f) / 4.0f;  // ties
    }
  }
  return SampleSet("r", TumourClass::whole, d, count, std::move(probs));
}

// ---- 1: epistemic variance against a two-pass brute-force oracle

Outcome formula_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> tdist(1, 50);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_sample_set(rng, tdist(rng));
    const auto var = epistemic_variance(s);
    const int t_count = s.count();
    for (std::size_t v = 0; v < s.voxels(); ++v) {
      long double mean = 0.0L;
      for (int t = 0; t < t_count; ++t) mean += s.sample(t)[v];
      mean /= t_count;
      long double ss = 0.0L;
      for (int t = 0; t < t_count; ++t) {
        const long double dv = s.sample(t)[v] - mean;
        ss += dv * dv;
      }
      const double oracle = static_cast<double>(ss / t_count);
      worst = std::max(worst, std::abs(var.values[v] - oracle));
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-10 && secs < 10.0;
  o.detail = "1000 sets, max |err| " + num(worst) + " (tol 1e-10), " + num(secs, 3) + " s (limit 10 s)";
  o.record = {{"max_abs_error", worst}, {"seconds", secs}};
  return o;
}

// ---- 2: heteroscedastic loss with zero sigma equals cross entropy

Outcome loss_collapse() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> side(1, 5), tdist(1, 20);
  std::normal_distribution<double> n(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    net::Tensor<double> logits(d, 2), sigma(d, 1);
    for (auto& v : logits.data) v = n(rng);
    std::vector<std::uint8_t> target(d.voxels());
    for (auto& t : target) t = static_cast<std::uint8_t>(rng() & 1);
    const double h = net::heteroscedastic_loss(logits, sigma, target, tdist(rng), rng());
    const double ce = net::cross_entropy_loss(logits, target);
    worst = std::max(worst, std::abs(h - ce));
  }
  Outcome o;
  o.pass = worst <= 1e-8;
  o.detail = "100 cases, max |hetero - ce| " + num(worst) + " (tol 1e-8)";
  o.record = {{"max_abs_difference", worst}};
  return o;
}

// ---- 3: analytic against central-difference gradients

double max_relative_gradient_error(net::Variant variant, bool hetero) {
  net::NetworkConfig c;
  c.variant = variant;
  c.architecture = net::Architecture::shallow;
  c.filters = {3, 3, 4, 4, 3};
  c.input_channels = 2;
  c.rng_seed = 31;
  c.hetero_noise_samples = 4;
  auto weights = net::init_weights(c);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& t : weights.tensors) {
    if (t.name.ends_with("/bias")) {
      for (auto& v : t.data) v = static_cast<float>(u(rng));
    }
  }
  net::Model<double> model(c, weights);
  const Dims d{4, 4, 4};
  net::Tensor<double> x(d, c.input_channels);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.data) v = n(rng);
  std::vector<std::uint8_t> target(d.voxels());
  for (auto& t : target) t = static_cast<std::uint8_t>(rng() & 1);

  auto loss = [&](bool grad) {
    const auto out = model.forward(x, true, 4242);
    net::Tensor<double> dl, ds;
    if (hetero) {
      const double l = net::heteroscedastic_loss(out.logits, *out.sigma, target, c.hetero_noise_samples, 77,
                                                 grad ? &dl : nullptr, grad ? &ds : nullptr);
      if (grad) model.backward(dl, &ds);
      return l;
    }
    const double l = net::cross_entropy_loss(out.logits, target, grad ? &dl : nullptr);
    if (grad) model.backward(dl, nullptr);
    return l;
  };

  model.zero_grad();
  loss(true);
  const auto analytic = model.grads();
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t p = 0; p < model.values().size(); ++p) {
    auto& w = model.values()[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double lp = loss(false);
      w[i] = orig - h;
      const double lm = loss(false);
      w[i] = orig;
      const double numeric = (lp - lm) / (2 * h);
      const double denom = std::max({std::abs(analytic[p][i]), std::abs(numeric), 1e-7});
      worst = std::max(worst, std::abs(analytic[p][i] - numeric) / denom);
    }
  }
  return worst;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const double ce = max_relative_gradient_error(net::Variant::drop_last, false);
  const double het = max_relative_gradient_error(net::Variant::hetero, true);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ce < 1e-4 && het < 1e-4 && secs < 60.0;
  o.detail = "max rel err ce " + num(ce) + ", hetero " + num(het) + " (tol 1e-4), " + num(secs, 3) +
             " s (limit 60 s)";
  o.record = {{"cross_entropy", ce}, {"heteroscedastic", het}, {"seconds", secs}};
  return o;
}

// ---- 4: volumetric CDFs are non-decreasing

Outcome monotone_cdf() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> tdist(1, 50);
  const auto grid = default_percentile_grid();
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cdf = volumetric_cdf(random_sample_set(rng, tdist(rng)), grid);
    for (std::size_t k = 1; k < cdf.volumes.size(); ++k) violations += cdf.volumes[k] < cdf.volumes[k - 1];
  }
  Outcome o;
  o.pass = violations == 0;
  o.detail = "1000 sets, " + std::to_string(violations) + " decreasing steps (exact)";
  o.record = {{"violations", violations}};
  return o;
}

// ---- 5: percentile contours nest on every test subject

Outcome contour_nesting(const PipelineConfig& config) {
  const TreeLayout tree{config.out};
  const Cohort cohort = read_cohort(tree.cohort());
  const std::vector<double> levels{0.0, 0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95, 1.0};
  long pairs = 0, violations = 0;
  int subjects = 0;
  for (const auto& m : config.primary_models()) {
    for (const auto& e : cohort.in_split(Split::test)) {
      const auto s = read_sample_set(tree.samples(m) / e.id);
      std::vector<BinaryMask> masks;
      for (double q : levels) masks.push_back(percentile_contour(s, q));
      for (std::size_t i = 0; i < masks.size(); ++i) {
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
          const auto a = masks[i].bits(), b = masks[j].bits();
          bool nested = true;
          for (std::size_t v = 0; v < a.size(); ++v) {
            if (a[v] && !b[v]) {
              nested = false;
              break;
            }
          }
          ++pairs;
          violations += !nested;
        }
      }
      ++subjects;
    }
  }
  Outcome o;
  o.pass = violations == 0 && subjects > 0;
  o.detail = std::to_string(subjects) + " subject-class sets, " + std::to_string(pairs) + " ordered pairs, " +
             std::to_string(violations) + " not nested (exact)";
  o.record = {{"subject_class_sets", subjects}, {"pairs", pairs}, {"violations", violations}};
  return o;
}

// ---- 6: sample-range baseline under-covers; calibrated interval does not

double pipeline_seconds(const fs::path& root) {
  double total = 0.0;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().filename() != kManifestName || entry.path().parent_path() == root) continue;
    total += read_manifest(entry.path().parent_path()).wall_clock_seconds;
  }
  return total;
}

Outcome baseline_degeneracy(const PipelineConfig& config) {
  const TreeLayout tree{config.out};
  const auto cov = read_csv(tree.eval() / "coverage.csv");
  Outcome o;
  o.pass = true;
  std::ostringstream detail;
  for (auto cls : config.classes) {
    const std::string c(to_string(cls));
    double range = std::nan(""), cal = std::nan("");
    int n = 0;
    for (std::size_t r = 0; r < cov.rows.size(); ++r) {
      if (cov.cell(r, "class") != c || std::abs(cov.number(r, "level") - config.level) > 1e-12) continue;
      if (cov.cell(r, "method") == "sample_range") range = cov.number(r, "coverage");
      if (cov.cell(r, "method") == "calibrated") {
        cal = cov.number(r, "coverage");
        n = static_cast<int>(cov.number(r, "n"));
      }
    }
    const bool ok = n >= 50 && range < cal && cal >= 0.80 && cal <= 1.00;
    o.pass = o.pass && ok;
    detail << c << ": n " << n << ", range " << num(range, 3) << " < calibrated " << num(cal, 3)
           << (ok ? "" : " [fails]") << "; ";
    o.record[c] = {{"n", n}, {"sample_range_coverage", range}, {"calibrated_coverage", cal}};
  }
  const double secs = pipeline_seconds(tree.root);
  o.pass = o.pass && secs < 4 * 3600.0;
  detail << "pipeline " << num(secs / 3600.0, 3) << " h (limit 4 h)";
  o.record["pipeline_seconds"] = secs;
  o.detail = detail.str();
  return o;
}

// ---- 7: closed-form affine fit

Outcome calibration_math() {
  // Least squares of u = {1/4, 1/2, 3/4} on r = {0.4, 0.5, 0.6}:
  // a = cov(r, u) / var(r) = (0.1 * 0.25 * 2) / (0.01 * 2) = 2.5, b = 0.5 - 2.5 * 0.5.
  const std::vector<double> ranks{0.4, 0.5, 0.6};
  const auto m = fit_affine(ranks);
  const double ea = std::abs(m.a - 2.5), eb = std::abs(m.b + 0.75);
  Outcome o;
  o.pass = ea <= 1e-12 && eb <= 1e-12;
  o.detail = "a " + num(m.a, 17) + ", b " + num(m.b, 17) + " (tol 1e-12)";
  o.record = {{"a", m.a}, {"b", m.b}};
  return o;
}

// ---- 8: scripted early stopping

Outcome early_stop() {
  net::NetworkConfig c;
  c.variant = net::Variant::drop_all;
  c.filters = {3, 3, 4, 4, 3};
  c.input_channels = 2;
  c.rng_seed = 808;
  std::vector<net::TrainingSubject> subjects;
  for (int i = 0; i < 2; ++i) {
    PhantomSpec spec;
    spec.size = 12;
    spec.num_channels = 2;
    spec.whole_radius_range = {2.5, 3.5};
    spec.rng_seed = 880 + i;
    const auto p = generate_phantom(spec);
    subjects.push_back(net::make_training_subject("s" + std::to_string(i), p.image,
                                                  hierarchical_masks(p.labels).whole));
  }
  const std::vector<double> seq{1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.1, 0.1};
  net::TrainOptions opt;
  opt.validation_loss = [&](int epoch) { return seq.at(epoch - 1); };
  std::vector<net::NetworkWeights> per_epoch;
  opt.on_epoch = [&](const net::EpochRecord&, const net::NetworkWeights& w) { per_epoch.push_back(w); };
  const auto r = net::train(c, subjects, {}, opt);
  const bool restored = per_epoch.size() >= 2 && r.weights == per_epoch[1];
  Outcome o;
  o.pass = r.epochs_run == 7 && r.early_stopped && r.best_epoch == 2 && restored;
  o.detail = "halted after epoch " + std::to_string(r.epochs_run) + ", restored epoch " +
             std::to_string(r.best_epoch) + (restored ? " (weights identical)" : " (weights differ)");
  o.record = {{"epochs_run", r.epochs_run}, {"best_epoch", r.best_epoch}, {"weights_restored", restored}};
  return o;
}

// ---- 9: noise robustness on the default phantom subject

Outcome noise_robustness(const PipelineConfig& config) {
  const TreeLayout tree{config.out};
  const auto t = read_csv(tree.eval() / "noise_sweep.csv");
  Outcome o;
  o.pass = true;
  std::ostringstream detail;
  std::string subject;
  for (auto cls : config.classes) {
    const std::string c(to_string(cls));
    std::vector<std::pair<double, double>> dice;  // sigma, dice
    bool contains = true;
    int checked = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.cell(r, "class") != c) continue;
      subject = t.cell(r, "subject");
      const double s = t.number(r, "sigma_pct");
      dice.emplace_back(s, t.number(r, "dice"));
      if (s <= 0.2 + 1e-12) {
        ++checked;
        contains = contains && t.cell(r, "contains") == "1";
      }
    }
    std::sort(dice.begin(), dice.end());
    bool monotone = true;
    for (std::size_t k = 1; k < dice.size(); ++k) monotone = monotone && dice[k].second <= dice[k - 1].second + 0.02;
    const bool ok = checked == 3 && contains && monotone;
    o.pass = o.pass && ok;
    detail << c << ": contained " << (contains ? "yes" : "no") << ", dice";
    for (const auto& [s, d] : dice) detail << ' ' << num(d, 3);
    detail << (monotone ? "" : " (increases by > 0.02)") << "; ";
    json levels = json::array();
    for (const auto& [s, d] : dice) levels.push_back({{"sigma_pct", s}, {"dice", d}});
    o.record[c] = {{"contained_at_0_to_0.2", contains}, {"dice", levels}};
  }
  o.record["subject"] = subject;
  o.detail = "subject " + subject + "; " + detail.str();
  return o;
}

// ---- 10: Dice of drop_all against the no-dropout network

Outcome variant_ordering(const PipelineConfig& config) {
  const TreeLayout tree{config.out};
  const auto t = read_csv(tree.eval() / "dice_summary.csv");
  auto mean_dice = [&](const std::string& variant, const std::string& cls) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.cell(r, "variant") == variant && t.cell(r, "class") == cls) return t.number(r, "mean_dice");
    }
    return std::nan("");
  };
  const double drop_all = mean_dice("drop_all", "whole");
  const double standard = mean_dice("default", "whole");
  Outcome o;
  o.pass = drop_all >= standard - 0.05 && drop_all >= 0.70 && standard >= 0.70;
  o.detail = "whole tumour mean Dice drop_all " + num(drop_all, 4) + ", default " + num(standard, 4) +
             " (need drop_all >= default - 0.05, both >= 0.70); root seed " + std::to_string(config.seed);
  o.record = {{"drop_all", drop_all},
              {"default", standard},
              {"root_seed", config.seed},
              {"training_seed_drop_all", training_seed(config.seed, {net::Variant::drop_all, TumourClass::whole})},
              {"training_seed_default", training_seed(config.seed, {net::Variant::standard, TumourClass::whole})}};
  for (auto cls : config.classes) o.record["drop_all_" + std::string(to_string(cls))] = mean_dice("drop_all", std::string(to_string(cls)));
  return o;
}

// ---- 11: two runs of one config give byte-identical CSVs

std::map<std::string, std::string> files_with_extension(const fs::path& root, const std::string& ext) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ext) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[e.path().lexically_relative(root).generic_string()] = ss.str();
  }
  return out;
}

Outcome determinism(const fs::path& mini_config, const fs::path& work) {
  std::map<std::string, std::string> csv[2], svg[2];
  for (int k = 0; k < 2; ++k) {
    PipelineConfig c = load_pipeline_config(mini_config);
    c.out = work / (k == 0 ? "mini_a" : "mini_b");
    fs::remove_all(c.out);
    run_pipeline(c, {effective_jobs(c.jobs), "acceptance", nullptr});
    csv[k] = files_with_extension(c.out, ".csv");
    svg[k] = files_with_extension(c.out, ".svg");
  }
  int differing = 0;
  for (const auto& [path, bytes] : csv[0]) {
    auto it = csv[1].find(path);
    differing += it == csv[1].end() || it->second != bytes;
  }
  const bool same_set = csv[0].size() == csv[1].size();
  Outcome o;
  o.pass = same_set && differing == 0 && !csv[0].empty();
  o.detail = std::to_string(csv[0].size()) + " CSVs, " + std::to_string(differing) + " differ; SVGs " +
             (svg[0] == svg[1] ? "identical" : "differ");
  o.record = {{"csv_files", csv[0].size()}, {"csv_differing", differing}, {"svg_identical", svg[0] == svg[1]}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volcal acceptance suite"};
  std::string full_config = VOLCAL_ACCEPTANCE_DIR "/full.toml";
  std::string mini_config = VOLCAL_ACCEPTANCE_DIR "/mini.toml";
  std::string tree, work = "acceptance-work";
  std::vector<int> only;
  app.add_option("--config", full_config, "full pipeline config")->capture_default_str();
  app.add_option("--mini", mini_config, "config run twice for the determinism check")->capture_default_str();
  app.add_option("--tree", tree, "artifact tree of the full run (default: run.out of --config)");
  app.add_option("--work", work, "scratch directory for the determinism runs")->capture_default_str();
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
  PipelineConfig config;
  const bool need_tree = wanted(5) || wanted(6) || wanted(9) || wanted(10);
  try {
    config = load_pipeline_config(full_config);
    if (!tree.empty()) config.out = tree;
    if (need_tree) {
      std::cerr << "acceptance: bringing " << config.out.string() << " up to date\n";
      run_pipeline(config, {effective_jobs(config.jobs), "acceptance", &std::cerr});
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance: full pipeline failed: " << e.what() << '\n';
    return 1;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"formula fidelity", formula_fidelity},
      {"loss collapse", loss_collapse},
      {"gradient check", gradient_check},
      {"monotone cdf", monotone_cdf},
      {"contour nesting", [&] { return contour_nesting(config); }},
      {"baseline degeneracy", [&] { return baseline_degeneracy(config); }},
      {"calibration math", calibration_math},
      {"early-stop contract", early_stop},
      {"noise robustness", [&] { return noise_robustness(config); }},
      {"variant ordering", [&] { return variant_ordering(config); }},
      {"determinism", [&] { return determinism(mini_config, work); }},
  };

  json report = {{"config", full_config}, {"tree", config.out.string()}, {"root_seed", config.seed}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    if (!wanted(k)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << k << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
    report["criteria"][std::to_string(k)] = {{"name", criteria[i].first}, {"pass", o.pass}, {"detail", o.detail},
                                             {"values", o.record}};
  }
  if (need_tree) {
    std::ofstream(config.out / "acceptance_report.json") << report.dump(2) << '\n';
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
