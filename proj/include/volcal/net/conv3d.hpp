#pragma once

#include "volcal/net/tensor.hpp"

namespace volcal::net {

// Stride-1, zero-padded ("same") 3D convolution with a cubic kernel of size
// 1 or 3. Kernel layout [kd][kh][kw][cin][cout], i.e. a (taps*cin) x cout
// row-major matrix.
struct ConvGeometry {
  int cin = 0;
  int cout = 0;
  int ksize = 3;
  int dilation = 1;

  int taps() const { return ksize == 3 ? 27 : 1; }
  std::size_t kernel_size() const {
    return static_cast<std::size_t>(taps()) * static_cast<std::size_t>(cin) *
           static_cast<std::size_t>(cout);
  }
};

template <typename S>
void conv3d_forward(const Tensor<S>& x, const S* kernel, const S* bias, const ConvGeometry& g,
                    Tensor<S>& y);

// Accumulates into dkernel/dbias; writes (overwrites) dx when non-null.
template <typename S>
void conv3d_backward(const Tensor<S>& x, const S* kernel, const ConvGeometry& g,
                     const Tensor<S>& dy, Tensor<S>* dx, S* dkernel, S* dbias);

}  // namespace volcal::net
