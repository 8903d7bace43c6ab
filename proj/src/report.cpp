#include "volcal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "volcal/csv.hpp"
#include "volcal/error.hpp"
#include "volcal/eval.hpp"
#include "volcal/mc_inference.hpp"
#include "volcal/volume_io.hpp"
#include "volcal/volumetrics.hpp"

namespace volcal {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Rounds the upper axis limit up to a tidy value.
double nice_ceiling(double v) {
  if (!(v > 0.0)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (v <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

Svg volume_scatter(std::span<const ScatterPoint> points, const std::string& title) {
  double top = 0.0;
  for (const auto& p : points) top = std::max({top, p.truth, p.estimate, p.hi});
  top = nice_ceiling(top * 1.05);
  Svg svg(460, 420);
  const PlotFrame f{70, 40, 360, 320, 0.0, top, 0.0, top};
  svg.text(230, 22, title, 13, "middle");
  f.axes(svg, "true volume (voxels)", "predicted volume (voxels)");
  svg.line(f.px(0), f.py(0), f.px(top), f.py(top), "#999999", 1.0, "4 3");
  for (const auto& p : points) {
    const bool hit = p.lo <= p.truth && p.truth <= p.hi;
    const char* colour = hit ? "#1f77b4" : "#d62728";
    svg.line(f.px(p.truth), f.py(p.lo), f.px(p.truth), f.py(p.hi), colour, 1.2);
    svg.circle(f.px(p.truth), f.py(p.estimate), 2.6, colour);
  }
  svg.text(80, 56, std::to_string(points.size()) + " subjects; red: truth outside the interval", 10);
  return svg;
}

RankHistogram rank_histogram(std::span<const double> pre, std::span<const double> post, int bins) {
  if (bins < 1) throw ParameterError("rank_histogram needs at least one bin");
  RankHistogram h;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(static_cast<double>(i) / bins);
  auto fill = [&](std::span<const double> xs) {
    std::vector<int> counts(bins, 0);
    for (double x : xs) {
      const int b = std::clamp(static_cast<int>(std::floor(x * bins)), 0, bins - 1);
      ++counts[b];
    }
    return counts;
  };
  h.pre = fill(pre);
  h.post = fill(post);
  h.ks_pre = pre.empty() ? 0.0 : ks_uniform(pre);
  h.ks_post = post.empty() ? 0.0 : ks_uniform(post);
  return h;
}

Svg rank_histogram_plot(const RankHistogram& h, const std::string& title) {
  const int bins = static_cast<int>(h.pre.size());
  int top = 1;
  for (int i = 0; i < bins; ++i) top = std::max({top, h.pre[i], h.post[i]});
  Svg svg(460, 380);
  const PlotFrame f{60, 50, 370, 270, 0.0, 1.0, 0.0, static_cast<double>(top)};
  svg.text(230, 22, title, 13, "middle");
  f.axes(svg, "rank of the true volume in its CDF", "subjects");
  const double bw = 1.0 / bins;
  for (int i = 0; i < bins; ++i) {
    const double x0 = h.edges[i];
    svg.rect(f.px(x0 + 0.05 * bw), f.py(h.pre[i]), f.px(x0 + 0.48 * bw) - f.px(x0 + 0.05 * bw),
             f.py(0) - f.py(h.pre[i]), "#ff7f0e");
    svg.rect(f.px(x0 + 0.52 * bw), f.py(h.post[i]), f.px(x0 + 0.95 * bw) - f.px(x0 + 0.52 * bw),
             f.py(0) - f.py(h.post[i]), "#1f77b4");
  }
  svg.rect(300, 40, 10, 10, "#ff7f0e");
  svg.text(315, 49, "before, KS " + fixed(h.ks_pre), 10);
  svg.rect(300, 56, 10, 10, "#1f77b4");
  svg.text(315, 65, "after, KS " + fixed(h.ks_post), 10);
  return svg;
}

SlicePanel axial_slice(std::span<const float> volume, const Dims& dims, int z, std::string title) {
  if (z < 0 || z >= dims.depth) throw ParameterError("slice index out of range");
  SlicePanel p;
  p.title = std::move(title);
  p.height = dims.height;
  p.width = dims.width;
  p.values.resize(static_cast<std::size_t>(dims.height) * dims.width);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const double v = volume[dims.index(z, y, x)];
      p.values[static_cast<std::size_t>(y) * dims.width + x] = v;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  p.lo = lo;
  p.hi = hi > lo ? hi : lo + 1.0;
  return p;
}

int busiest_slice(const BinaryMask& mask) {
  const Dims& d = mask.dims();
  int best = d.depth / 2;
  std::size_t best_count = 0;
  for (int z = 0; z < d.depth; ++z) {
    std::size_t c = 0;
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) c += mask[d.index(z, y, x)];
    }
    if (c > best_count) {
      best_count = c;
      best = z;
    }
  }
  return best;
}

Svg slice_panels(const std::vector<SlicePanel>& panels, const std::string& title, double cell) {
  double width = 20, height = 0;
  for (const auto& p : panels) {
    width += p.width * cell + 20;
    height = std::max(height, p.height * cell);
  }
  Svg svg(std::max(width, 200.0), height + 90);
  svg.text(10, 20, title, 13);
  double x0 = 20;
  for (const auto& p : panels) {
    const double y0 = 50;
    svg.text(x0, 42, p.title, 10);
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        const double v = p.values[static_cast<std::size_t>(y) * p.width + x];
        svg.rect(x0 + x * cell, y0 + y * cell, cell, cell, Svg::heat((v - p.lo) / (p.hi - p.lo)));
      }
    }
    if (!p.outline.empty()) {
      auto on = [&](int y, int x) {
        return y >= 0 && y < p.height && x >= 0 && x < p.width && p.outline[static_cast<std::size_t>(y) * p.width + x];
      };
      for (int y = 0; y <= p.height; ++y) {
        for (int x = 0; x <= p.width; ++x) {
          if (on(y, x) != on(y - 1, x) && x < p.width) {
            svg.line(x0 + x * cell, y0 + y * cell, x0 + (x + 1) * cell, y0 + y * cell, "#ff3030", 1.2);
          }
          if (on(y, x) != on(y, x - 1) && y < p.height) {
            svg.line(x0 + x * cell, y0 + y * cell, x0 + x * cell, y0 + (y + 1) * cell, "#ff3030", 1.2);
          }
        }
      }
    }
    svg.text(x0, y0 + p.height * cell + 14, "range " + fixed(p.lo, 4) + " .. " + fixed(p.hi, 4), 9);
    x0 += p.width * cell + 20;
  }
  return svg;
}

Svg noise_panel(const std::vector<NoiseSeries>& series, const std::string& title) {
  const double plot_w = 300, plot_h = 220, thumb = 3.0;
  std::size_t levels = 0;
  for (const auto& s : series) levels = std::max(levels, s.points.size());
  const double row_h = plot_h + 120;
  const double width = 90 + plot_w + 40 + static_cast<double>(levels) * (32 * thumb + 12);
  Svg svg(width, 40 + row_h * static_cast<double>(series.size()));
  svg.text(10, 20, title, 13);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const double top0 = 50 + row_h * static_cast<double>(k);
    double xmax = 0.0, ymax = 0.0;
    for (const auto& p : s.points) {
      xmax = std::max(xmax, p.sigma_pct);
      ymax = std::max({ymax, p.hi, p.truth, p.mean_volume});
    }
    const PlotFrame f{80, top0 + 10, plot_w, plot_h, 0.0, xmax > 0 ? xmax * 1.1 : 1.0, 0.0, nice_ceiling(ymax * 1.05)};
    svg.text(80, top0, s.label, 12);
    f.axes(svg, "noise sigma (fraction of mean foreground intensity)", "volume");
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto& p = s.points[i];
      const bool hit = p.lo <= p.truth && p.truth <= p.hi;
      svg.line(f.px(p.sigma_pct), f.py(p.lo), f.px(p.sigma_pct), f.py(p.hi), hit ? "#444444" : "#d62728", 2.0);
      svg.circle(f.px(p.sigma_pct), f.py(p.mean_volume), 3.0, "#444444");
      svg.text(f.px(p.sigma_pct) + 5, f.py(p.hi) - 4, "Dice " + fixed(p.dice, 2), 9);
    }
    if (!s.points.empty()) {
      const double t = s.points.front().truth;
      svg.line(f.left, f.py(t), f.left + f.width, f.py(t), "#1f77b4", 1.2, "5 3");
      svg.text(f.left + f.width + 4, f.py(t) + 3, "truth", 9);
    }
    double tx = 80 + plot_w + 60;
    for (std::size_t i = 0; i < s.variance.size(); ++i) {
      const auto& v = s.variance[i];
      svg.text(tx, top0 + 20, v.title, 9);
      for (int y = 0; y < v.height; ++y) {
        for (int x = 0; x < v.width; ++x) {
          const double val = v.values[static_cast<std::size_t>(y) * v.width + x];
          svg.rect(tx + x * thumb, top0 + 28 + y * thumb, thumb, thumb, Svg::heat((val - v.lo) / (v.hi - v.lo)));
        }
      }
      tx += v.width * thumb + 12;
    }
  }
  return svg;
}

// ---------------------------------------------------------------- bundle

ReportFiles write_report(const ReportInputs& in, const fs::path& out) {
  fs::create_directories(out);
  ReportFiles result;
  result.summary = nlohmann::json::object();
  const auto& tree = in.tree;
  const auto intervals = read_csv(tree.eval() / "intervals.csv");
  const auto ranks = read_csv(tree.eval() / "ranks.csv");
  const auto noise = read_csv(tree.eval() / "noise_sweep.csv");
  const Cohort cohort = read_cohort(tree.cohort());

  CsvWriter hist_csv({"class", "bin_lo", "bin_hi", "pre", "post"});
  CsvWriter ks_csv({"class", "n", "ks_pre", "ks_post"});
  std::vector<NoiseSeries> noise_series;

  Phantom subject;
  if (!in.noise_subject.empty()) subject = cohort.load(cohort.find(in.noise_subject));

  for (const auto& model : in.primary) {
    const std::string cname(to_string(model.cls));

    std::vector<ScatterPoint> pts;
    for (std::size_t r = 0; r < intervals.rows.size(); ++r) {
      if (intervals.cell(r, "class") != cname) continue;
      pts.push_back({intervals.cell(r, "subject"), intervals.number(r, "truth"), intervals.number(r, "mean_volume"),
                     intervals.number(r, "cal_lo"), intervals.number(r, "cal_hi")});
    }
    const std::string scatter = "scatter_" + cname + ".svg";
    volume_scatter(pts, cname + ": calibrated " + fixed(in.level * 100, 0) + "% intervals").write(out / scatter);
    result.files.push_back(scatter);

    std::vector<double> pre, post;
    for (std::size_t r = 0; r < ranks.rows.size(); ++r) {
      if (ranks.cell(r, "class") != cname) continue;
      pre.push_back(ranks.number(r, "rank_pre"));
      post.push_back(ranks.number(r, "rank_post"));
    }
    const auto h = rank_histogram(pre, post);
    for (std::size_t b = 0; b < h.pre.size(); ++b) {
      hist_csv.row({cname, format_double(h.edges[b]), format_double(h.edges[b + 1]), std::to_string(h.pre[b]),
                    std::to_string(h.post[b])});
    }
    ks_csv.row({cname, std::to_string(pre.size()), format_double(h.ks_pre), format_double(h.ks_post)});
    const std::string hist = "rank_hist_" + cname + ".svg";
    rank_histogram_plot(h, cname + ": ranks before and after calibration").write(out / hist);
    result.files.push_back(hist);
    result.summary[cname] = {{"ks_pre", h.ks_pre}, {"ks_post", h.ks_post}, {"scatter_points", pts.size()}};

    if (in.noise_subject.empty()) continue;
    const BinaryMask truth = hierarchical_masks(subject.labels).get(model.cls);
    const int z = busiest_slice(truth);
    const Dims& dims = subject.image.dims();

    // Uncertainty maps over the leading passes.
    const auto mean = read_multichannel(tree.cdfs(model) / (in.noise_subject + "_mean.vjson"));
    const auto var = read_multichannel(tree.cdfs(model) / (in.noise_subject + "_var.vjson"));
    std::vector<SlicePanel> panels;
    panels.push_back(axial_slice(subject.image.channel(0), dims, z, "image (channel 0)"));
    SlicePanel prob = axial_slice(mean.channel(0), dims, z, "mean foreground probability");
    prob.lo = 0.0;
    prob.hi = 1.0;
    SlicePanel epi = axial_slice(var.channel(0), dims, z, "epistemic variance");
    epi.lo = 0.0;
    epi.hi = std::max(epi.hi, 1e-12);
    SlicePanel tot = axial_slice(var.channel(2), dims, z, "total variance");
    tot.lo = 0.0;
    tot.hi = std::max(tot.hi, 1e-12);
    std::vector<std::uint8_t> outline(static_cast<std::size_t>(dims.height) * dims.width);
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) outline[static_cast<std::size_t>(y) * dims.width + x] = truth[dims.index(z, y, x)];
    }
    for (auto* p : {&prob, &epi, &tot}) p->outline = outline;
    panels.insert(panels.end(), {prob, epi, tot});
    const std::string maps = "uncertainty_" + cname + ".svg";
    slice_panels(panels, in.noise_subject + ", " + cname + ", axial slice " + std::to_string(z) + " (truth outlined)")
        .write(out / maps);
    result.files.push_back(maps);

    // Percentile contours: voxels inside the 5th/50th/95th percentile segmentations.
    const auto samples = read_sample_set(tree.samples(model) / in.noise_subject);
    const auto qs = voxelwise_quantiles(samples, std::vector<double>{0.05, 0.5, 0.95});
    std::vector<float> layers(dims.voxels(), 0.0f);
    for (const auto& q : qs) {
      const auto m = threshold(q);
      for (std::size_t v = 0; v < layers.size(); ++v) layers[v] += m[v] ? 1.0f : 0.0f;
    }
    SlicePanel contour = axial_slice(layers, dims, z, "inside 95th / 50th / 5th percentile contours (1 / 2 / 3)");
    contour.lo = 0.0;
    contour.hi = 3.0;
    contour.outline = outline;
    const std::string contours = "contours_" + cname + ".svg";
    slice_panels({contour}, in.noise_subject + ", " + cname + ": percentile contours (truth outlined)", 8.0)
        .write(out / contours);
    result.files.push_back(contours);

    NoiseSeries s;
    s.label = cname + " (" + in.noise_subject + ")";
    int level_index = 0;
    for (std::size_t r = 0; r < noise.rows.size(); ++r) {
      if (noise.cell(r, "class") != cname) continue;
      NoisePoint p;
      p.sigma_pct = noise.number(r, "sigma_pct");
      p.truth = noise.number(r, "truth");
      p.lo = noise.number(r, "lo");
      p.hi = noise.number(r, "hi");
      p.mean_volume = noise.number(r, "mean_volume");
      p.dice = noise.number(r, "dice");
      s.points.push_back(p);
      const fs::path vp = tree.eval() / "noise" / (cname + "_level" + std::to_string(level_index) + "_var.vjson");
      if (fs::exists(vp)) {
        const auto v = read_multichannel(vp);
        SlicePanel sp = axial_slice(v.channel(0), dims, z, "sigma " + fixed(p.sigma_pct, 2));
        sp.lo = 0.0;
        sp.hi = 0.25;
        s.variance.push_back(std::move(sp));
      }
      ++level_index;
    }
    noise_series.push_back(std::move(s));
  }
  hist_csv.write(out / "rank_histogram.csv");
  ks_csv.write(out / "ks.csv");
  result.files.push_back("rank_histogram.csv");
  result.files.push_back("ks.csv");
  if (!noise_series.empty()) {
    noise_panel(noise_series, "Calibrated intervals and epistemic variance under added Gaussian noise")
        .write(out / "noise_sweep.svg");
    result.files.push_back("noise_sweep.svg");
  }
  return result;
}

}  // namespace volcal
