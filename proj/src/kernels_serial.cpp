#include "hatebm/kernels.hpp"

namespace hatebm::kernels::serial {

namespace {

// Index of input pixel for output pixel `o`, kernel tap `k`; false if it
// falls in the zero padding.
bool input_coord(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent,
                 std::size_t& i) {
  const long long v = static_cast<long long>(o * stride + k) - static_cast<long long>(pad);
  if (v < 0 || v >= static_cast<long long>(extent)) {
    return false;
  }
  i = static_cast<std::size_t>(v);
  return true;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t co = 0; co < g.out_c; ++co) {
          double s = bias[co];
          for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            std::size_t iy = 0;
            if (!input_coord(oy, ky, g.stride, g.pad, g.in_h, iy)) continue;
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
              std::size_t ix = 0;
              if (!input_coord(ox, kx, g.stride, g.pad, g.in_w, ix)) continue;
              for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                s += in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] *
                     weight[((ky * g.kernel + kx) * g.in_c + ci) * g.out_c + co];
              }
            }
          }
          out[((n * oh + oy) * ow + ox) * g.out_c + co] = s;
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t iy = 0; iy < g.in_h; ++iy) {
      for (std::size_t ix = 0; ix < g.in_w; ++ix) {
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          double s = 0.0;
          for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            const long long ty = static_cast<long long>(iy + g.pad) - static_cast<long long>(ky);
            if (ty < 0 || ty % static_cast<long long>(g.stride) != 0) continue;
            const std::size_t oy = static_cast<std::size_t>(ty) / g.stride;
            if (oy >= oh) continue;
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
              const long long tx = static_cast<long long>(ix + g.pad) - static_cast<long long>(kx);
              if (tx < 0 || tx % static_cast<long long>(g.stride) != 0) continue;
              const std::size_t ox = static_cast<std::size_t>(tx) / g.stride;
              if (ox >= ow) continue;
              for (std::size_t co = 0; co < g.out_c; ++co) {
                s += grad_out[((n * oh + oy) * ow + ox) * g.out_c + co] *
                     weight[((ky * g.kernel + kx) * g.in_c + ci) * g.out_c + co];
              }
            }
          }
          grad_in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] = s;
        }
      }
    }
  }
}

void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t ky = 0; ky < g.kernel; ++ky) {
    for (std::size_t kx = 0; kx < g.kernel; ++kx) {
      for (std::size_t ci = 0; ci < g.in_c; ++ci) {
        for (std::size_t co = 0; co < g.out_c; ++co) {
          double s = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              std::size_t iy = 0;
              if (!input_coord(oy, ky, g.stride, g.pad, g.in_h, iy)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t ix = 0;
                if (!input_coord(ox, kx, g.stride, g.pad, g.in_w, ix)) continue;
                s += in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] *
                     grad_out[((n * oh + oy) * ow + ox) * g.out_c + co];
              }
            }
          }
          grad_weight[((ky * g.kernel + kx) * g.in_c + ci) * g.out_c + co] += s;
        }
      }
    }
  }
  for (std::size_t co = 0; co < g.out_c; ++co) {
    double s = 0.0;
    for (std::size_t p = 0; p < g.batch * oh * ow; ++p) {
      s += grad_out[p * g.out_c + co];
    }
    grad_bias[co] += s;
  }
}

void dense_forward(const DenseGeometry& g, std::span<const double> in, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> out) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out; ++o) {
      double s = bias[o];
      for (std::size_t i = 0; i < g.in; ++i) {
        s += in[n * g.in + i] * weight[i * g.out + o];
      }
      out[n * g.out + o] = s;
    }
  }
}

void dense_backward_input(const DenseGeometry& g, std::span<const double> grad_out,
                          std::span<const double> weight, std::span<double> grad_in) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t i = 0; i < g.in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < g.out; ++o) {
        s += grad_out[n * g.out + o] * weight[i * g.out + o];
      }
      grad_in[n * g.in + i] = s;
    }
  }
}

void dense_backward_params(const DenseGeometry& g, std::span<const double> in,
                           std::span<const double> grad_out, std::span<double> grad_weight,
                           std::span<double> grad_bias) {
  for (std::size_t i = 0; i < g.in; ++i) {
    for (std::size_t o = 0; o < g.out; ++o) {
      double s = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        s += in[n * g.in + i] * grad_out[n * g.out + o];
      }
      grad_weight[i * g.out + o] += s;
    }
  }
  for (std::size_t o = 0; o < g.out; ++o) {
    double s = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      s += grad_out[n * g.out + o];
    }
    grad_bias[o] += s;
  }
}

}  // namespace hatebm::kernels::serial
