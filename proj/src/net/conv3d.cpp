#include "volcal/net/conv3d.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstring>
#include <type_traits>
#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "volcal/error.hpp"

namespace volcal::net {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Output rows processed per GEMM; bounds the im2col buffer.
constexpr std::size_t kChunkRows = 4096;

struct TapOffsets {
  std::array<std::array<int, 3>, 27> off;
};

TapOffsets tap_offsets(int dilation, bool flipped) {
  TapOffsets t{};
  int i = 0;
  for (int kz = -1; kz <= 1; ++kz) {
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        const int s = flipped ? -dilation : dilation;
        t.off[i++] = {kz * s, ky * s, kx * s};
      }
    }
  }
  return t;
}

// Gathers taps for output voxels [v0, v1) into col (rows x 27*channels).
template <typename S>
void im2col(const Tensor<S>& x, const TapOffsets& taps, std::size_t v0, std::size_t v1,
            std::vector<S>& col) {
  const int c = x.channels;
  const std::size_t row_len = 27 * static_cast<std::size_t>(c);
  col.resize((v1 - v0) * row_len);
  const Dims& d = x.dims;
  const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
  for (std::size_t v = v0; v < v1; ++v) {
    const int z = static_cast<int>(v / plane);
    const int y = static_cast<int>((v / d.width) % d.height);
    const int xx = static_cast<int>(v % d.width);
    S* dst = col.data() + (v - v0) * row_len;
    for (int t = 0; t < 27; ++t, dst += c) {
      const int sz = z + taps.off[t][0];
      const int sy = y + taps.off[t][1];
      const int sx = xx + taps.off[t][2];
      if (d.contains(sz, sy, sx)) {
        std::memcpy(dst, x.row(d.index(sz, sy, sx)), sizeof(S) * c);
      } else {
        std::fill(dst, dst + c, S(0));
      }
    }
  }
}

template <typename S>
thread_local std::vector<S> col_buffer;

void check_shapes(int channels, int expected, const char* what) {
  if (channels != expected) {
    throw ConfigError(std::string("conv3d ") + what + " channel mismatch: got " +
                      std::to_string(channels) + ", expected " + std::to_string(expected));
  }
}


#if defined(__AVX512F__)
// Direct convolution for float with 8, 16 or 32 output channels: each block
// of R consecutive x voxels keeps its outputs in registers while the 27 taps
// stream past, so no im2col buffer is needed. `kernel` is [27][cin][cout];
// `taps` gives the source offset of each tap.
template <int NV, int R>
void direct_conv_512(const Tensor<float>& x, const float* kernel, const float* bias, int cout_unused,
                     const TapOffsets& taps, Tensor<float>& y) {
  (void)cout_unused;
  constexpr int CO = NV * 16;
  const int cin = x.channels;
  const Dims& d = x.dims;
  const std::vector<float> zero(cin, 0.0f);
  for (int z = 0; z < d.depth; ++z) {
    for (int yy = 0; yy < d.height; ++yy) {
      for (int x0 = 0; x0 < d.width; x0 += R) {
        __m512 acc[R][NV];
        for (int j = 0; j < R; ++j) {
          for (int v = 0; v < NV; ++v) acc[j][v] = bias ? _mm512_loadu_ps(bias + 16 * v) : _mm512_setzero_ps();
        }
        for (int t = 0; t < 27; ++t) {
          const int sz = z + taps.off[t][0];
          const int sy = yy + taps.off[t][1];
          if (sz < 0 || sz >= d.depth || sy < 0 || sy >= d.height) continue;
          const float* rows[R];
          for (int j = 0; j < R; ++j) {
            const int sx = x0 + j + taps.off[t][2];
            rows[j] = (sx >= 0 && sx < d.width && x0 + j < d.width) ? x.row(d.index(sz, sy, sx)) : zero.data();
          }
          const float* w = kernel + static_cast<std::size_t>(t) * cin * CO;
          for (int ci = 0; ci < cin; ++ci) {
            __m512 wv[NV];
            for (int v = 0; v < NV; ++v) wv[v] = _mm512_loadu_ps(w + ci * CO + 16 * v);
            for (int j = 0; j < R; ++j) {
              const __m512 a = _mm512_set1_ps(rows[j][ci]);
              for (int v = 0; v < NV; ++v) acc[j][v] = _mm512_fmadd_ps(a, wv[v], acc[j][v]);
            }
          }
        }
        for (int j = 0; j < R && x0 + j < d.width; ++j) {
          float* out = y.row(d.index(z, yy, x0 + j));
          for (int v = 0; v < NV; ++v) _mm512_storeu_ps(out + 16 * v, acc[j][v]);
        }
      }
    }
  }
}

template <int R>
void direct_conv_256(const Tensor<float>& x, const float* kernel, const float* bias, const TapOffsets& taps,
                     Tensor<float>& y) {
  const int cin = x.channels;
  const Dims& d = x.dims;
  const std::vector<float> zero(cin, 0.0f);
  for (int z = 0; z < d.depth; ++z) {
    for (int yy = 0; yy < d.height; ++yy) {
      for (int x0 = 0; x0 < d.width; x0 += R) {
        __m256 acc[R];
        for (int j = 0; j < R; ++j) acc[j] = bias ? _mm256_loadu_ps(bias) : _mm256_setzero_ps();
        for (int t = 0; t < 27; ++t) {
          const int sz = z + taps.off[t][0];
          const int sy = yy + taps.off[t][1];
          if (sz < 0 || sz >= d.depth || sy < 0 || sy >= d.height) continue;
          const float* rows[R];
          for (int j = 0; j < R; ++j) {
            const int sx = x0 + j + taps.off[t][2];
            rows[j] = (sx >= 0 && sx < d.width && x0 + j < d.width) ? x.row(d.index(sz, sy, sx)) : zero.data();
          }
          const float* w = kernel + static_cast<std::size_t>(t) * cin * 8;
          for (int ci = 0; ci < cin; ++ci) {
            const __m256 wv = _mm256_loadu_ps(w + ci * 8);
            for (int j = 0; j < R; ++j) acc[j] = _mm256_fmadd_ps(_mm256_set1_ps(rows[j][ci]), wv, acc[j]);
          }
        }
        for (int j = 0; j < R && x0 + j < d.width; ++j) _mm256_storeu_ps(y.row(d.index(z, yy, x0 + j)), acc[j]);
      }
    }
  }
}
#endif

// Runs the direct kernel when one exists for this type and width.
template <typename S>
bool try_direct(const Tensor<S>& x, const S* kernel, const S* bias, int cout, const TapOffsets& taps,
                Tensor<S>& y) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<S, float>) {
    switch (cout) {
      case 8: direct_conv_256<8>(x, kernel, bias, taps, y); return true;
      case 16: direct_conv_512<1, 8>(x, kernel, bias, cout, taps, y); return true;
      case 32: direct_conv_512<2, 8>(x, kernel, bias, cout, taps, y); return true;
      default: return false;
    }
  }
#endif
  (void)x, (void)kernel, (void)bias, (void)cout, (void)taps, (void)y;
  return false;
}

}  // namespace

template <typename S>
void conv3d_forward(const Tensor<S>& x, const S* kernel, const S* bias, const ConvGeometry& g,
                    Tensor<S>& y) {
  check_shapes(x.channels, g.cin, "input");
  if (y.dims != x.dims || y.channels != g.cout) y = Tensor<S>(x.dims, g.cout);
  const std::size_t nv = x.voxels();
  const Eigen::Map<const RowVec<S>> b(bias, g.cout);
  if (g.ksize == 1) {
    const Eigen::Map<const RowMat<S>> w(kernel, g.cin, g.cout);
    const Eigen::Map<const RowMat<S>> in(x.data.data(), nv, g.cin);
    Eigen::Map<RowMat<S>> out(y.data.data(), nv, g.cout);
    out.noalias() = in * w;
    out.rowwise() += b;
    return;
  }
  const auto taps = tap_offsets(g.dilation, false);
  if (try_direct(x, kernel, bias, g.cout, taps, y)) return;
  const Eigen::Map<const RowMat<S>> w(kernel, 27 * g.cin, g.cout);
  auto& col = col_buffer<S>;
  for (std::size_t v0 = 0; v0 < nv; v0 += kChunkRows) {
    const std::size_t v1 = std::min(nv, v0 + kChunkRows);
    im2col(x, taps, v0, v1, col);
    const Eigen::Map<const RowMat<S>> c(col.data(), v1 - v0, 27 * g.cin);
    Eigen::Map<RowMat<S>> out(y.row(v0), v1 - v0, g.cout);
    out.noalias() = c * w;
    out.rowwise() += b;
  }
}

template <typename S>
void conv3d_backward(const Tensor<S>& x, const S* kernel, const ConvGeometry& g,
                     const Tensor<S>& dy, Tensor<S>* dx, S* dkernel, S* dbias) {
  check_shapes(x.channels, g.cin, "input");
  check_shapes(dy.channels, g.cout, "gradient");
  const std::size_t nv = x.voxels();
  const Eigen::Map<const RowMat<S>> dout(dy.data.data(), nv, g.cout);
  Eigen::Map<RowVec<S>> db(dbias, g.cout);
  db += dout.colwise().sum();

  if (g.ksize == 1) {
    const Eigen::Map<const RowMat<S>> w(kernel, g.cin, g.cout);
    const Eigen::Map<const RowMat<S>> in(x.data.data(), nv, g.cin);
    Eigen::Map<RowMat<S>> dw(dkernel, g.cin, g.cout);
    dw.noalias() += in.transpose() * dout;
    if (dx) {
      if (dx->dims != x.dims || dx->channels != g.cin) *dx = Tensor<S>(x.dims, g.cin);
      Eigen::Map<RowMat<S>> din(dx->data.data(), nv, g.cin);
      din.noalias() = dout * w.transpose();
    }
    return;
  }

  auto& col = col_buffer<S>;
  const auto taps = tap_offsets(g.dilation, false);
  Eigen::Map<RowMat<S>> dw(dkernel, 27 * g.cin, g.cout);
  for (std::size_t v0 = 0; v0 < nv; v0 += kChunkRows) {
    const std::size_t v1 = std::min(nv, v0 + kChunkRows);
    im2col(x, taps, v0, v1, col);
    const Eigen::Map<const RowMat<S>> c(col.data(), v1 - v0, 27 * g.cin);
    dw.noalias() += c.transpose() * dout.middleRows(v0, v1 - v0);
  }

  if (!dx) return;
  // The input gradient is a convolution of dy with the spatially flipped,
  // channel-transposed kernel: block t of `flipped` is W_{26-t}^T.
  RowMat<S> flipped(27 * g.cout, g.cin);
  for (int t = 0; t < 27; ++t) {
    const int src = 26 - t;
    for (int co = 0; co < g.cout; ++co) {
      for (int ci = 0; ci < g.cin; ++ci) {
        flipped(t * g.cout + co, ci) =
            kernel[(static_cast<std::size_t>(src) * g.cin + ci) * g.cout + co];
      }
    }
  }
  if (dx->dims != x.dims || dx->channels != g.cin) *dx = Tensor<S>(x.dims, g.cin);
  if (try_direct<S>(dy, flipped.data(), nullptr, g.cin, taps, *dx)) return;
  for (std::size_t v0 = 0; v0 < nv; v0 += kChunkRows) {
    const std::size_t v1 = std::min(nv, v0 + kChunkRows);
    im2col(dy, taps, v0, v1, col);
    const Eigen::Map<const RowMat<S>> c(col.data(), v1 - v0, 27 * g.cout);
    Eigen::Map<RowMat<S>> din(dx->row(v0), v1 - v0, g.cin);
    din.noalias() = c * flipped;
  }
}

template void conv3d_forward<float>(const Tensor<float>&, const float*, const float*,
                                    const ConvGeometry&, Tensor<float>&);
template void conv3d_forward<double>(const Tensor<double>&, const double*, const double*,
                                     const ConvGeometry&, Tensor<double>&);
template void conv3d_backward<float>(const Tensor<float>&, const float*, const ConvGeometry&,
                                     const Tensor<float>&, Tensor<float>*, float*, float*);
template void conv3d_backward<double>(const Tensor<double>&, const double*, const ConvGeometry&,
                                      const Tensor<double>&, Tensor<double>*, double*, double*);

}  // namespace volcal::net
