#pragma once

#include <cstdint>
#include <span>

#include "volcal/net/tensor.hpp"

namespace volcal::net {

// Mean over voxels of -log softmax(logits)[target]; log-sum-exp stabilised.
// When `dlogits` is non-null it receives the gradient of the mean.
template <typename S>
double cross_entropy_loss(const Tensor<S>& logits, std::span<const std::uint8_t> target,
                          Tensor<S>* dlogits = nullptr);

// Heteroscedastic logit-noise loss. Corrupted logits x_t = f + sigma * eps_t
// with eps_t ~ N(0, I) drawn per voxel, per sample and per class from `seed`;
// returns -(1/N) sum_i log (1/T) sum_t softmax(x_t)[target_i].
// Throws ParameterError for T < 1 or negative sigma.
template <typename S>
double heteroscedastic_loss(const Tensor<S>& logits, const Tensor<S>& sigma,
                            std::span<const std::uint8_t> target, int noise_samples,
                            std::uint64_t seed, Tensor<S>* dlogits = nullptr,
                            Tensor<S>* dsigma = nullptr);

}  // namespace volcal::net
