#include "volcal/mc_inference.hpp"

#include <algorithm>
#include <json.hpp>

#include "volcal/error.hpp"
#include "volcal/fs_util.hpp"
#include "volcal/net/model.hpp"
#include "volcal/volume_io.hpp"

namespace volcal {

namespace fs = std::filesystem;

SampleSet::SampleSet(std::string subject, TumourClass cls, Dims dims, int count,
                     std::vector<float> probs, std::vector<float> sigmas)
    : subject_(std::move(subject)),
      cls_(cls),
      dims_(dims),
      count_(count),
      probs_(std::move(probs)),
      sigmas_(std::move(sigmas)) {
  if (count_ < 1) throw ParameterError("a sample set needs T >= 1");
  const std::size_t n = static_cast<std::size_t>(count_) * dims_.voxels();
  if (probs_.size() != n) throw SizeMismatchError("sample stack size does not match T x voxels");
  for (float p : probs_) {
    if (!(p >= 0.0f && p <= 1.0f)) throw NumericalError("sample probability outside [0,1]");
  }
  if (!sigmas_.empty()) {
    if (sigmas_.size() != n) throw SizeMismatchError("sigma stack size does not match T x voxels");
    for (float s : sigmas_) {
      if (!(s >= 0.0f)) throw NumericalError("negative or non-finite sigma in sample set");
    }
  }
}

std::span<const float> SampleSet::sample(int t) const {
  return std::span<const float>(probs_).subspan(static_cast<std::size_t>(t) * voxels(), voxels());
}

std::span<const float> SampleSet::sigma(int t) const {
  return std::span<const float>(sigmas_).subspan(static_cast<std::size_t>(t) * voxels(), voxels());
}

SampleSet mc_sample(const net::NetworkWeights& weights, const net::NetworkConfig& config,
                    const MultiChannelVolume& input, int count, std::uint64_t seed,
                    std::string subject, TumourClass cls) {
  if (count < 1) throw ParameterError("mc_sample needs T >= 1");
  net::Model<float> model(config, weights);
  const auto x = net::to_tensor<float>(input);
  const std::size_t nv = input.dims().voxels();
  std::vector<float> probs(static_cast<std::size_t>(count) * nv);
  std::vector<float> sigmas;
  if (config.has_sigma_head()) sigmas.resize(probs.size());

  const int distinct = config.stochastic() ? count : 1;
  for (int t = 0; t < distinct; ++t) {
    const auto out = model.forward(x, true, seed ^ static_cast<std::uint64_t>(t));
    const auto p = net::foreground_probability(out.logits);
    std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(t * nv));
    if (out.sigma) {
      std::copy(out.sigma->data.begin(), out.sigma->data.end(),
                sigmas.begin() + static_cast<std::ptrdiff_t>(t * nv));
    }
  }
  for (int t = distinct; t < count; ++t) {
    std::copy_n(probs.begin(), nv, probs.begin() + static_cast<std::ptrdiff_t>(t * nv));
    if (!sigmas.empty()) std::copy_n(sigmas.begin(), nv, sigmas.begin() + static_cast<std::ptrdiff_t>(t * nv));
  }
  return SampleSet(std::move(subject), cls, input.dims(), count, std::move(probs), std::move(sigmas));
}

VarianceVolume epistemic_variance(const SampleSet& s) {
  const std::size_t nv = s.voxels();
  VarianceVolume out{s.dims(), std::vector<double>(nv, 0.0)};
  const double inv_t = 1.0 / s.count();
  const auto first = s.sample(0);
  std::vector<double> sum(nv, 0.0), sum_sq(nv, 0.0);
  for (int t = 0; t < s.count(); ++t) {
    const auto y = s.sample(t);
    for (std::size_t v = 0; v < nv; ++v) {
      const double d = static_cast<double>(y[v]) - static_cast<double>(first[v]);
      sum[v] += d;
      sum_sq[v] += d * d;
    }
  }
  for (std::size_t v = 0; v < nv; ++v) {
    const double m = sum[v] * inv_t;
    out.values[v] = std::max(0.0, sum_sq[v] * inv_t - m * m);
  }
  return out;
}

ProbVolume sample_mean(const SampleSet& s) {
  const std::size_t nv = s.voxels();
  std::vector<double> acc(nv, 0.0);
  for (int t = 0; t < s.count(); ++t) {
    const auto y = s.sample(t);
    for (std::size_t v = 0; v < nv; ++v) acc[v] += y[v];
  }
  std::vector<float> mean(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    mean[v] = std::clamp(static_cast<float>(acc[v] / s.count()), 0.0f, 1.0f);
  }
  return ProbVolume(s.dims(), std::move(mean));
}

UncertaintyMaps total_variance(const SampleSet& s) {
  UncertaintyMaps m;
  m.mean = sample_mean(s);
  m.var_epistemic = epistemic_variance(s);
  const std::size_t nv = s.voxels();
  m.var_aleatoric = {s.dims(), std::vector<double>(nv, 0.0)};
  if (s.has_sigmas()) {
    for (int t = 0; t < s.count(); ++t) {
      const auto sg = s.sigma(t);
      for (std::size_t v = 0; v < nv; ++v) {
        m.var_aleatoric.values[v] += static_cast<double>(sg[v]) * static_cast<double>(sg[v]);
      }
    }
    for (auto& v : m.var_aleatoric.values) v /= s.count();
  }
  m.var_total = {s.dims(), std::vector<double>(nv)};
  for (std::size_t v = 0; v < nv; ++v) {
    m.var_total.values[v] = m.var_epistemic.values[v] + m.var_aleatoric.values[v];
  }
  return m;
}

std::vector<double> sample_volumes(const SampleSet& s) {
  std::vector<double> out(s.count());
  for (int t = 0; t < s.count(); ++t) out[t] = volume_of(s.sample(t));
  return out;
}

namespace {

fs::path with_suffix(const fs::path& stem, std::string_view suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

}  // namespace

void write_sample_set(const SampleSet& s, const fs::path& stem, std::uint64_t seed,
                      std::string_view variant) {
  const auto probs = s.probs();
  write_volume(MultiChannelVolume(s.dims(), s.count(), std::vector<float>(probs.begin(), probs.end())),
               with_suffix(stem, ".vjson"));
  if (s.has_sigmas()) {
    const auto sg = s.sigmas();
    write_volume(MultiChannelVolume(s.dims(), s.count(), std::vector<float>(sg.begin(), sg.end())),
                 with_suffix(stem, ".sigma.vjson"));
  }
  nlohmann::json meta{{"subject", s.subject()},
                      {"class", to_string(s.cls())},
                      {"T", s.count()},
                      {"seed", seed},
                      {"variant", variant},
                      {"has_sigmas", s.has_sigmas()},
                      {"stack", stem.filename().string() + ".vjson"}};
  write_text_atomic(with_suffix(stem, ".json"), meta.dump(2) + "\n");
}

SampleSet read_sample_set(const fs::path& stem) {
  const auto meta = nlohmann::json::parse(read_file(with_suffix(stem, ".json")));
  auto stack = read_multichannel(with_suffix(stem, ".vjson"));
  const int t = meta.at("T").get<int>();
  if (stack.channels() != t) throw SizeMismatchError("sample stack channel count != T");
  std::vector<float> sigmas;
  if (meta.value("has_sigmas", false)) {
    auto sg = read_multichannel(with_suffix(stem, ".sigma.vjson"));
    sigmas.assign(sg.data().begin(), sg.data().end());
  }
  return SampleSet(meta.at("subject").get<std::string>(),
                   parse_tumour_class(meta.at("class").get<std::string>()), stack.dims(), t,
                   std::vector<float>(stack.data().begin(), stack.data().end()), std::move(sigmas));
}

}  // namespace volcal
