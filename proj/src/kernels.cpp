#include "hatebm/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <vector>

namespace hatebm::kernels {

namespace {

using index_t = std::ptrdiff_t;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// Images per im2col block in the weight-gradient reduction. Fixed so the
// summation order never depends on the thread count.
constexpr std::size_t kParamChunk = 8;

inline index_t tap(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent) {
  const index_t v = static_cast<index_t>(o * stride + k) - static_cast<index_t>(pad);
  return (v < 0 || v >= static_cast<index_t>(extent)) ? -1 : v;
}

std::size_t patch_len(const Conv2dGeometry& g) { return g.kernel * g.kernel * g.in_c; }

// Rows are output pixels, columns (ky, kx, ci); zeros in the padding.
void im2col(const Conv2dGeometry& g, const double* img, double* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), ic = g.in_c, kd = patch_len(g);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* row = cols + (oy * ow + ox) * kd;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const index_t iy = tap(oy, ky, g.stride, g.pad, g.in_h);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          double* dst = row + (ky * g.kernel + kx) * ic;
          const index_t ix = tap(ox, kx, g.stride, g.pad, g.in_w);
          if (iy < 0 || ix < 0) {
            std::fill_n(dst, ic, 0.0);
          } else {
            std::copy_n(img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * ic, ic,
                        dst);
          }
        }
      }
    }
  }
}

void col2im_add(const Conv2dGeometry& g, const double* cols, double* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), ic = g.in_c, kd = patch_len(g);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* row = cols + (oy * ow + ox) * kd;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const index_t iy = tap(oy, ky, g.stride, g.pad, g.in_h);
        if (iy < 0) continue;
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const index_t ix = tap(ox, kx, g.stride, g.pad, g.in_w);
          if (ix < 0) continue;
          const double* src = row + (ky * g.kernel + kx) * ic;
          double* dst = img + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * ic;
          for (std::size_t ci = 0; ci < ic; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t pix = g.out_h() * g.out_w();
  const std::size_t kd = patch_len(g);
  const std::size_t in_sample = g.in_h * g.in_w * g.in_c;
  const MapC w(weight.data(), static_cast<index_t>(kd), static_cast<index_t>(g.out_c));
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<index_t>(g.out_c));

#pragma omp parallel
  {
    std::vector<double> cols(pix * kd);
#pragma omp for schedule(static)
    for (index_t ni = 0; ni < static_cast<index_t>(g.batch); ++ni) {
      const std::size_t n = static_cast<std::size_t>(ni);
      im2col(g, in.data() + n * in_sample, cols.data());
      Map o(out.data() + n * pix * g.out_c, static_cast<index_t>(pix), static_cast<index_t>(g.out_c));
      o.noalias() = MapC(cols.data(), static_cast<index_t>(pix), static_cast<index_t>(kd)) * w;
      o.rowwise() += b;
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t pix = g.out_h() * g.out_w();
  const std::size_t kd = patch_len(g);
  const std::size_t in_sample = g.in_h * g.in_w * g.in_c;
  const MapC w(weight.data(), static_cast<index_t>(kd), static_cast<index_t>(g.out_c));

#pragma omp parallel
  {
    RowMat cols(static_cast<index_t>(pix), static_cast<index_t>(kd));
#pragma omp for schedule(static)
    for (index_t ni = 0; ni < static_cast<index_t>(g.batch); ++ni) {
      const std::size_t n = static_cast<std::size_t>(ni);
      cols.noalias() =
          MapC(grad_out.data() + n * pix * g.out_c, static_cast<index_t>(pix), static_cast<index_t>(g.out_c)) *
          w.transpose();
      double* gi = grad_in.data() + n * in_sample;
      std::fill_n(gi, in_sample, 0.0);
      col2im_add(g, cols.data(), gi);
    }
  }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t pix = g.out_h() * g.out_w();
  const std::size_t kd = patch_len(g);
  const std::size_t in_sample = g.in_h * g.in_w * g.in_c;
  Map gw(grad_weight.data(), static_cast<index_t>(kd), static_cast<index_t>(g.out_c));
  std::vector<double> cols(std::min(g.batch, kParamChunk) * pix * kd);

  for (std::size_t n0 = 0; n0 < g.batch; n0 += kParamChunk) {
    const std::size_t cnt = std::min(kParamChunk, g.batch - n0);
#pragma omp parallel for schedule(static)
    for (index_t j = 0; j < static_cast<index_t>(cnt); ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      im2col(g, in.data() + (n0 + jj) * in_sample, cols.data() + jj * pix * kd);
    }
    const index_t rows = static_cast<index_t>(cnt * pix);
    gw.noalias() += MapC(cols.data(), rows, static_cast<index_t>(kd)).transpose() *
                    MapC(grad_out.data() + n0 * pix * g.out_c, rows, static_cast<index_t>(g.out_c));
  }

  const std::size_t pixels = g.batch * pix;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* go = grad_out.data() + p * g.out_c;
    for (std::size_t co = 0; co < g.out_c; ++co) grad_bias[co] += go[co];
  }
}

void dense_forward(const DenseGeometry& g, std::span<const double> in, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> out) {
  const index_t n = static_cast<index_t>(g.batch), di = static_cast<index_t>(g.in), dout = static_cast<index_t>(g.out);
  Map o(out.data(), n, dout);
  o.noalias() = MapC(in.data(), n, di) * MapC(weight.data(), di, dout);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), dout);
}

void dense_backward_input(const DenseGeometry& g, std::span<const double> grad_out,
                          std::span<const double> weight, std::span<double> grad_in) {
  const index_t n = static_cast<index_t>(g.batch), di = static_cast<index_t>(g.in), dout = static_cast<index_t>(g.out);
  Map(grad_in.data(), n, di).noalias() = MapC(grad_out.data(), n, dout) * MapC(weight.data(), di, dout).transpose();
}

void dense_backward_params(const DenseGeometry& g, std::span<const double> in,
                           std::span<const double> grad_out, std::span<double> grad_weight,
                           std::span<double> grad_bias) {
  const index_t n = static_cast<index_t>(g.batch), di = static_cast<index_t>(g.in), dout = static_cast<index_t>(g.out);
  Map(grad_weight.data(), di, dout).noalias() += MapC(in.data(), n, di).transpose() * MapC(grad_out.data(), n, dout);
  for (std::size_t s = 0; s < g.batch; ++s) {
    for (std::size_t k = 0; k < g.out; ++k) grad_bias[k] += grad_out[s * g.out + k];
  }
}

}  // namespace hatebm::kernels
