#include "volcal/net/model.hpp"

#include <cmath>
#include <random>

#include "volcal/error.hpp"
#include "volcal/seeds.hpp"

namespace volcal::net {

DropoutMask draw_dropout_mask(std::size_t units, double p, std::uint64_t mask_seed, int site) {
  DropoutMask m;
  m.p = p;
  m.active = p > 0.0;
  m.keep.assign(units, 1);
  if (!m.active) return m;
  std::mt19937_64 rng(mix64(mask_seed ^ mix64(static_cast<std::uint64_t>(site) + 1)));
  // Two 32-bit uniforms per draw; a unit is dropped when its uniform < p * 2^32.
  const auto threshold = static_cast<std::uint64_t>(std::llround(p * 4294967296.0));
  std::size_t i = 0;
  while (i < units) {
    const std::uint64_t r = rng();
    m.keep[i++] = (r & 0xffffffffULL) >= threshold;
    if (i < units) m.keep[i++] = (r >> 32) >= threshold;
  }
  return m;
}

template <typename S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
std::vector<float> foreground_probability(const Tensor<S>& logits) {
  std::vector<float> p(logits.voxels());
  for (std::size_t v = 0; v < p.size(); ++v) {
    const S* l = logits.row(v);
    p[v] = static_cast<float>(sigmoid<S>(l[1] - l[0]));
  }
  return p;
}

namespace {

template <typename S>
void relu_inplace(Tensor<S>& t) {
  for (auto& v : t.data) v = v > S(0) ? v : S(0);
}

// dy *= (y > 0), y being the relu output.
template <typename S>
void relu_backward(const Tensor<S>& y, Tensor<S>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > S(0))) dy.data[i] = S(0);
  }
}

template <typename S>
void apply_mask(const DropoutMask& m, Tensor<S>& t) {
  if (!m.active) return;
  const S scale = static_cast<S>(m.scale());
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = m.keep[i] ? t.data[i] * scale : S(0);
}

template <typename S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace

template <typename S>
Model<S>::Model(NetworkConfig config, const NetworkWeights& weights)
    : config_(std::move(config)), layout_(parameter_layout(config_)) {
  config_.validate();
  check_weights(config_, weights);
  for (const auto& t : weights.tensors) {
    values_.emplace_back(t.data.begin(), t.data.end());
    grads_.emplace_back(t.data.size(), S(0));
  }
  conv0_ = make_conv("conv0", 3, 1);
  if (config_.architecture == Architecture::highres) {
    for (int b = 0; b < 3; ++b) {
      const std::string name = "block" + std::to_string(b + 1);
      const int dilation = 1 << b;
      blocks_[b].a = make_conv(name + "/conv_a", 3, dilation);
      blocks_[b].b = make_conv(name + "/conv_b", 3, dilation);
      if (index_of(name + "/proj/kernel") >= 0) blocks_[b].proj = make_conv(name + "/proj", 1, 1);
    }
    conv4_ = make_conv("conv4", 3, 1);
  }
  classifier_ = make_conv("classifier", 1, 1);
  if (index_of("seg_head/kernel") >= 0) seg_head_ = make_conv("seg_head", 3, 1);
  if (index_of("sigma_head/kernel") >= 0) sigma_head_ = make_conv("sigma_head", 3, 1);
  if (index_of("sigma_out/kernel") >= 0) sigma_out_ = make_conv("sigma_out", 1, 1);
}

template <typename S>
int Model<S>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename S>
typename Model<S>::Conv Model<S>::make_conv(const std::string& name, int ksize, int dilation) {
  Conv c;
  c.kernel = index_of(name + "/kernel");
  c.bias = index_of(name + "/bias");
  if (c.kernel < 0 || c.bias < 0) throw ConfigError("missing parameters for layer " + name);
  const auto& shape = layout_[c.kernel].shape;
  c.geom = ConvGeometry{shape[3], shape[4], ksize, dilation};
  return c;
}

template <typename S>
void Model<S>::conv_fwd(const Conv& c, const Tensor<S>& x, Tensor<S>& y) const {
  conv3d_forward(x, values_[c.kernel].data(), values_[c.bias].data(), c.geom, y);
}

template <typename S>
void Model<S>::conv_bwd(const Conv& c, const Tensor<S>& x, const Tensor<S>& dy, Tensor<S>* dx) {
  conv3d_backward(x, values_[c.kernel].data(), c.geom, dy, dx, grads_[c.kernel].data(),
                  grads_[c.bias].data());
}

template <typename S>
void Model<S>::dropout(Tensor<S>& t, DropoutSite site, double p, bool stochastic,
                       std::uint64_t seed) {
  if (!stochastic || p <= 0.0) {
    tape_.masks[site] = DropoutMask{};
    return;
  }
  tape_.masks[site] = draw_dropout_mask(t.data.size(), p, seed, site);
  apply_mask(tape_.masks[site], t);
}

template <typename S>
ForwardOutput<S> Model<S>::forward(const Tensor<S>& input, bool stochastic,
                                   std::uint64_t mask_seed) {
  if (input.channels != config_.input_channels) {
    throw ConfigError("input has " + std::to_string(input.channels) + " channels, network expects " +
                      std::to_string(config_.input_channels));
  }
  const bool drop = stochastic && config_.stochastic();
  for (auto& m : tape_.masks) m = DropoutMask{};

  tape_.input = input;
  if (drop && config_.input_dropout()) {
    dropout(tape_.input, kInputSite, config_.input_dropout_p, true, mask_seed);
  }
  conv_fwd(conv0_, tape_.input, tape_.h0);
  relu_inplace(tape_.h0);

  const Tensor<S>* trunk_in = &tape_.h0;
  if (config_.architecture == Architecture::highres) {
    Tensor<S> sum;
    for (int b = 0; b < 3; ++b) {
      auto& bt = tape_.blocks[b];
      const auto& blk = blocks_[b];
      bt.in = b == 0 ? tape_.h0 : tape_.blocks[b - 1].out;
      if (b > 0) apply_mask(tape_.masks[kBlock1Site + b - 1], bt.in);
      conv_fwd(blk.a, bt.in, bt.r1);
      relu_inplace(bt.r1);
      conv_fwd(blk.b, bt.r1, bt.out);
      if (blk.proj) {
        conv_fwd(*blk.proj, bt.in, sum);
        add_inplace(bt.out, sum);
      } else {
        add_inplace(bt.out, bt.in);
      }
      relu_inplace(bt.out);
      if (drop && config_.block_dropout()) {
        tape_.masks[kBlock1Site + b] =
            draw_dropout_mask(bt.out.data.size(), config_.dropout_p, mask_seed, kBlock1Site + b);
      }
    }
    tape_.conv4_in = tape_.blocks[2].out;
    apply_mask(tape_.masks[kBlock3Site], tape_.conv4_in);
    conv_fwd(conv4_, tape_.conv4_in, tape_.h4);
    relu_inplace(tape_.h4);
    trunk_in = &tape_.h4;
  }

  tape_.trunk = *trunk_in;
  if (drop && config_.final_dropout()) {
    dropout(tape_.trunk, kFinalSite, config_.dropout_p, true, mask_seed);
  }

  ForwardOutput<S> out;
  if (seg_head_) {
    conv_fwd(*seg_head_, tape_.trunk, tape_.seg_r);
    relu_inplace(tape_.seg_r);
    conv_fwd(classifier_, tape_.seg_r, out.logits);
  } else {
    conv_fwd(classifier_, tape_.trunk, out.logits);
  }
  if (sigma_out_) {
    const Tensor<S>* sig_in = &tape_.trunk;
    if (sigma_head_) {
      conv_fwd(*sigma_head_, tape_.trunk, tape_.sig_r);
      relu_inplace(tape_.sig_r);
      sig_in = &tape_.sig_r;
    }
    conv_fwd(*sigma_out_, *sig_in, tape_.sig_pre);
    Tensor<S> sigma = tape_.sig_pre;
    for (auto& v : sigma.data) v = softplus<S>(v);
    out.sigma = std::move(sigma);
  }
  return out;
}

template <typename S>
void Model<S>::backward(const Tensor<S>& dlogits, const Tensor<S>* dsigma) {
  Tensor<S> d_trunk;
  if (seg_head_) {
    Tensor<S> d_seg;
    conv_bwd(classifier_, tape_.seg_r, dlogits, &d_seg);
    relu_backward(tape_.seg_r, d_seg);
    conv_bwd(*seg_head_, tape_.trunk, d_seg, &d_trunk);
  } else {
    conv_bwd(classifier_, tape_.trunk, dlogits, &d_trunk);
  }
  if (sigma_out_ && dsigma) {
    Tensor<S> d_pre = *dsigma;
    for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
      d_pre.data[i] *= sigmoid<S>(tape_.sig_pre.data[i]);
    }
    Tensor<S> d_from_sigma;
    if (sigma_head_) {
      Tensor<S> d_sig_r;
      conv_bwd(*sigma_out_, tape_.sig_r, d_pre, &d_sig_r);
      relu_backward(tape_.sig_r, d_sig_r);
      conv_bwd(*sigma_head_, tape_.trunk, d_sig_r, &d_from_sigma);
    } else {
      conv_bwd(*sigma_out_, tape_.trunk, d_pre, &d_from_sigma);
    }
    add_inplace(d_trunk, d_from_sigma);
  }

  apply_mask(tape_.masks[kFinalSite], d_trunk);
  Tensor<S> d_h0;
  if (config_.architecture == Architecture::highres) {
    Tensor<S>& d_h4 = d_trunk;
    relu_backward(tape_.h4, d_h4);
    Tensor<S> d_out;
    conv_bwd(conv4_, tape_.conv4_in, d_h4, &d_out);
    apply_mask(tape_.masks[kBlock3Site], d_out);
    for (int b = 2; b >= 0; --b) {
      const auto& bt = tape_.blocks[b];
      const auto& blk = blocks_[b];
      relu_backward(bt.out, d_out);  // now d(sum)
      Tensor<S> d_r1;
      conv_bwd(blk.b, bt.r1, d_out, &d_r1);
      relu_backward(bt.r1, d_r1);
      Tensor<S> d_in;
      conv_bwd(blk.a, bt.in, d_r1, &d_in);
      if (blk.proj) {
        Tensor<S> d_proj;
        conv_bwd(*blk.proj, bt.in, d_out, &d_proj);
        add_inplace(d_in, d_proj);
      } else {
        add_inplace(d_in, d_out);
      }
      if (b > 0) apply_mask(tape_.masks[kBlock1Site + b - 1], d_in);
      d_out = std::move(d_in);
    }
    d_h0 = std::move(d_out);
  } else {
    d_h0 = std::move(d_trunk);
  }
  relu_backward(tape_.h0, d_h0);
  conv_bwd(conv0_, tape_.input, d_h0, nullptr);
}

template <typename S>
std::vector<std::uint8_t> Model<S>::relu_pattern() const {
  std::vector<std::uint8_t> bits;
  auto add = [&](const Tensor<S>& t) {
    for (S v : t.data) bits.push_back(v > S(0));
  };
  add(tape_.h0);
  if (config_.architecture == Architecture::highres) {
    for (const auto& b : tape_.blocks) {
      add(b.r1);
      add(b.out);
    }
    add(tape_.h4);
  }
  if (seg_head_) add(tape_.seg_r);
  if (sigma_head_) add(tape_.sig_r);
  return bits;
}

template <typename S>
void Model<S>::zero_grad() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), S(0));
}

template <typename S>
NetworkWeights Model<S>::weights() const {
  NetworkWeights w;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    NamedTensor t{layout_[i].name, layout_[i].shape, {}};
    t.data.reserve(values_[i].size());
    for (S v : values_[i]) t.data.push_back(static_cast<float>(v));
    w.tensors.push_back(std::move(t));
  }
  return w;
}

template float softplus<float>(float);
template double softplus<double>(double);
template float sigmoid<float>(float);
template double sigmoid<double>(double);
template std::vector<float> foreground_probability<float>(const Tensor<float>&);
template std::vector<float> foreground_probability<double>(const Tensor<double>&);

template class Model<float>;
template class Model<double>;

}  // namespace volcal::net
