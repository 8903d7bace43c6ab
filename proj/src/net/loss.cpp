#include "volcal/net/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "volcal/error.hpp"

namespace volcal::net {

namespace {

void check_target(std::size_t voxels, std::span<const std::uint8_t> target, int classes) {
  if (target.size() != voxels) throw ParameterError("loss target does not match logits");
  for (auto t : target) {
    if (t >= classes) throw ParameterError("loss target class out of range");
  }
}

double log_sum_exp(const double* x, int n) {
  double m = x[0];
  for (int k = 1; k < n; ++k) m = std::max(m, x[k]);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += std::exp(x[k] - m);
  return m + std::log(s);
}

}  // namespace

template <typename S>
double cross_entropy_loss(const Tensor<S>& logits, std::span<const std::uint8_t> target,
                          Tensor<S>* dlogits) {
  const int c = logits.channels;
  const std::size_t n = logits.voxels();
  check_target(n, target, c);
  if (dlogits) *dlogits = Tensor<S>(logits.dims, c);
  std::vector<double> x(c);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t v = 0; v < n; ++v) {
    const S* l = logits.row(v);
    for (int k = 0; k < c; ++k) x[k] = static_cast<double>(l[k]);
    const double lse = log_sum_exp(x.data(), c);
    total += lse - x[target[v]];
    if (dlogits) {
      S* d = dlogits->row(v);
      for (int k = 0; k < c; ++k) {
        const double p = std::exp(x[k] - lse);
        d[k] = static_cast<S>((p - (k == target[v] ? 1.0 : 0.0)) * inv_n);
      }
    }
  }
  return total * inv_n;
}

template <typename S>
double heteroscedastic_loss(const Tensor<S>& logits, const Tensor<S>& sigma,
                            std::span<const std::uint8_t> target, int noise_samples,
                            std::uint64_t seed, Tensor<S>* dlogits, Tensor<S>* dsigma) {
  if (noise_samples < 1) throw ParameterError("heteroscedastic loss needs T >= 1 noise samples");
  const int c = logits.channels;
  const std::size_t n = logits.voxels();
  check_target(n, target, c);
  if (sigma.voxels() != n || sigma.channels != 1) {
    throw ParameterError("sigma must be a one-channel map aligned with the logits");
  }
  if (dlogits) *dlogits = Tensor<S>(logits.dims, c);
  if (dsigma) *dsigma = Tensor<S>(logits.dims, 1);

  const int t_count = noise_samples;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(t_count) * c);
  std::vector<double> xhat(static_cast<std::size_t>(t_count) * c);
  std::vector<double> lse(t_count), logp(t_count);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;

  for (std::size_t v = 0; v < n; ++v) {
    const S* f = logits.row(v);
    const double s = static_cast<double>(sigma.data[v]);
    if (!(s >= 0.0)) throw ParameterError("sigma must be >= 0");
    const int cls = target[v];
    for (auto& e : eps) e = normal(rng);
    double m = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < t_count; ++t) {
      double* x = &xhat[static_cast<std::size_t>(t) * c];
      for (int k = 0; k < c; ++k) x[k] = static_cast<double>(f[k]) + s * eps[t * c + k];
      lse[t] = log_sum_exp(x, c);
      logp[t] = x[cls] - lse[t];
      m = std::max(m, logp[t]);
    }
    double sum = 0.0;
    for (int t = 0; t < t_count; ++t) sum += std::exp(logp[t] - m);
    total -= m + std::log(sum / t_count);

    if (dlogits || dsigma) {
      double ds = 0.0;
      std::vector<double> df(c, 0.0);
      for (int t = 0; t < t_count; ++t) {
        const double w = std::exp(logp[t] - m) / sum;
        const double* x = &xhat[static_cast<std::size_t>(t) * c];
        for (int k = 0; k < c; ++k) {
          const double p = std::exp(x[k] - lse[t]);
          const double g = -w * ((k == cls ? 1.0 : 0.0) - p);
          df[k] += g;
          ds += g * eps[t * c + k];
        }
      }
      if (dlogits) {
        S* d = dlogits->row(v);
        for (int k = 0; k < c; ++k) d[k] = static_cast<S>(df[k] * inv_n);
      }
      if (dsigma) dsigma->data[v] = static_cast<S>(ds * inv_n);
    }
  }
  return total * inv_n;
}

template double cross_entropy_loss<float>(const Tensor<float>&, std::span<const std::uint8_t>,
                                          Tensor<float>*);
template double cross_entropy_loss<double>(const Tensor<double>&, std::span<const std::uint8_t>,
                                           Tensor<double>*);
template double heteroscedastic_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                            std::span<const std::uint8_t>, int, std::uint64_t,
                                            Tensor<float>*, Tensor<float>*);
template double heteroscedastic_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                             std::span<const std::uint8_t>, int, std::uint64_t,
                                             Tensor<double>*, Tensor<double>*);

}  // namespace volcal::net
