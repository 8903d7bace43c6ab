#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volcal/net/config.hpp"
#include "volcal/volume.hpp"

namespace volcal {

// T stochastic foreground-probability maps for one subject and class,
// stored pass-major: probs[t * voxels + v].
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::string subject, TumourClass cls, Dims dims, int count, std::vector<float> probs,
            std::vector<float> sigmas = {});

  const std::string& subject() const { return subject_; }
  TumourClass cls() const { return cls_; }
  const Dims& dims() const { return dims_; }
  int count() const { return count_; }
  std::size_t voxels() const { return dims_.voxels(); }
  std::span<const float> sample(int t) const;
  std::span<const float> probs() const { return probs_; }
  bool has_sigmas() const { return !sigmas_.empty(); }
  std::span<const float> sigma(int t) const;
  std::span<const float> sigmas() const { return sigmas_; }

  bool operator==(const SampleSet&) const = default;

 private:
  std::string subject_;
  TumourClass cls_ = TumourClass::whole;
  Dims dims_{};
  int count_ = 0;
  std::vector<float> probs_;
  std::vector<float> sigmas_;
};

// Per-voxel variance volume, accumulated in double.
struct VarianceVolume {
  Dims dims{};
  std::vector<double> values;
};

struct UncertaintyMaps {
  ProbVolume mean;
  VarianceVolume var_epistemic;
  VarianceVolume var_aleatoric;
  VarianceVolume var_total;
};

// Pass t runs the network with mask seed (seed XOR t). Dropout-free
// variants are evaluated once and replicated, since every pass is identical.
SampleSet mc_sample(const net::NetworkWeights& weights, const net::NetworkConfig& config,
                    const MultiChannelVolume& input, int count, std::uint64_t seed,
                    std::string subject = {}, TumourClass cls = TumourClass::whole);

// Population variance over passes: (1/T) sum y^2 - ((1/T) sum y)^2, evaluated
// with the first pass as shift for stability. T = 1 gives zeros.
VarianceVolume epistemic_variance(const SampleSet& s);

// Epistemic variance plus the mean of sigma_t^2 (zero without sigmas).
UncertaintyMaps total_variance(const SampleSet& s);

ProbVolume sample_mean(const SampleSet& s);

// Per-pass volumes sum_v p_t(v).
std::vector<double> sample_volumes(const SampleSet& s);

// Stacked persistence: `<stem>.vjson/.vraw` with one channel per pass, plus
// `<stem>.sigma.vjson/.vraw` for hetero sets and `<stem>.json` metadata.
void write_sample_set(const SampleSet& s, const std::filesystem::path& stem,
                      std::uint64_t seed, std::string_view variant);
SampleSet read_sample_set(const std::filesystem::path& stem);

}  // namespace volcal
