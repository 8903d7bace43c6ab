#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "volcal/net/config.hpp"
#include "volcal/net/conv3d.hpp"
#include "volcal/net/tensor.hpp"

namespace volcal::net {

template <typename S>
struct ForwardOutput {
  Tensor<S> logits;              // num_classes channels
  std::optional<Tensor<S>> sigma;  // one channel, >= 0; hetero only
};

// Bernoulli(1 - p) keep mask with 1/(1 - p) rescaling of kept units.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double p = 0.0;
  bool active = false;

  double scale() const { return 1.0 / (1.0 - p); }
};

// Mask for `units` activations of dropout site `site` under `mask_seed`.
DropoutMask draw_dropout_mask(std::size_t units, double p, std::uint64_t mask_seed, int site);

// Dropout sites in forward order.
enum DropoutSite : int { kInputSite = 0, kBlock1Site = 1, kBlock2Site = 2, kBlock3Site = 3, kFinalSite = 4 };

// The segmentation network with explicit forward/backward passes. Not
// thread-safe: forward() records activations for backward(); use one
// instance per thread.
template <typename S>
class Model {
 public:
  Model(NetworkConfig config, const NetworkWeights& weights);

  const NetworkConfig& config() const { return config_; }

  // Deterministic given (weights, input, stochastic, mask_seed). With
  // stochastic == false or a dropout-free variant no unit is dropped.
  ForwardOutput<S> forward(const Tensor<S>& input, bool stochastic, std::uint64_t mask_seed);

  // Back-propagates through the most recent forward(); accumulates into grads().
  void backward(const Tensor<S>& dlogits, const Tensor<S>* dsigma);

  void zero_grad();
  std::vector<std::vector<S>>& values() { return values_; }
  const std::vector<std::vector<S>>& values() const { return values_; }
  std::vector<std::vector<S>>& grads() { return grads_; }
  const std::vector<ParamSpec>& layout() const { return layout_; }

  NetworkWeights weights() const;

  // Dropout masks drawn by the most recent forward(), in site order.
  const std::array<DropoutMask, 5>& last_masks() const { return tape_.masks; }

  // On/off state of every ReLU unit in the most recent forward(). Finite
  // differences are only meaningful between points sharing this pattern.
  std::vector<std::uint8_t> relu_pattern() const;

 private:
  struct Conv {
    int kernel = -1;
    int bias = -1;
    ConvGeometry geom;
  };
  struct Block {
    Conv a, b;
    std::optional<Conv> proj;
  };
  struct BlockTape {
    Tensor<S> in;   // block input (after the previous dropout)
    Tensor<S> r1;   // relu(conv_a(in))
    Tensor<S> out;  // relu(conv_b(r1) + shortcut(in)), before dropout
  };
  struct Tape {
    Tensor<S> input;  // after input dropout
    Tensor<S> h0;     // relu(conv0)
    std::array<BlockTape, 3> blocks;
    Tensor<S> conv4_in;
    Tensor<S> h4;     // relu(conv4), before dropout
    Tensor<S> trunk;  // head input, after final dropout
    Tensor<S> seg_r;
    Tensor<S> sig_r;
    Tensor<S> sig_pre;
    std::array<DropoutMask, 5> masks;
  };

  Conv make_conv(const std::string& name, int ksize, int dilation);
  int index_of(const std::string& name) const;
  void conv_fwd(const Conv& c, const Tensor<S>& x, Tensor<S>& y) const;
  void conv_bwd(const Conv& c, const Tensor<S>& x, const Tensor<S>& dy, Tensor<S>* dx);
  void dropout(Tensor<S>& t, DropoutSite site, double p, bool stochastic, std::uint64_t seed);

  NetworkConfig config_;
  std::vector<ParamSpec> layout_;
  std::vector<std::vector<S>> values_;
  std::vector<std::vector<S>> grads_;

  Conv conv0_;
  std::array<Block, 3> blocks_;
  Conv conv4_;
  Conv classifier_;
  std::optional<Conv> seg_head_;
  std::optional<Conv> sigma_head_;
  std::optional<Conv> sigma_out_;

  Tape tape_;
};

// Numerically stable softplus and its derivative (the logistic function).
template <typename S>
S softplus(S x);
template <typename S>
S sigmoid(S x);

// Foreground (class 1) softmax probability per voxel.
template <typename S>
std::vector<float> foreground_probability(const Tensor<S>& logits);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace volcal::net
