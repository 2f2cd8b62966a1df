#pragma once

#include <cstddef>
#include <span>

// Compute kernels behind the network layers. `hatebm::kernels` lowers
// convolutions to im2col + GEMM (Eigen) with OpenMP across images; reductions
// over the batch run in fixed-size blocks, so results do not depend on the
// thread count. `hatebm::kernels::serial` holds direct loops used as the
// reference in tests and benchmarks.

namespace hatebm::kernels {

// NHWC input, weights laid out [kernel][kernel][in_c][out_c].
struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t in_c = 1;
  std::size_t out_c = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t in_size() const { return batch * in_h * in_w * in_c; }
  std::size_t out_size() const { return batch * out_h() * out_w() * out_c; }
  std::size_t weight_size() const { return kernel * kernel * in_c * out_c; }
};

// Weights laid out [in][out].
struct DenseGeometry {
  std::size_t batch = 1;
  std::size_t in = 1;
  std::size_t out = 1;
};

// out = conv(in, weight) + bias. Overwrites `out`.
void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
// Overwrites `grad_in`.
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
// Accumulates into `grad_weight` and `grad_bias`.
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);

void dense_forward(const DenseGeometry& g, std::span<const double> in, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> out);
void dense_backward_input(const DenseGeometry& g, std::span<const double> grad_out,
                          std::span<const double> weight, std::span<double> grad_in);
void dense_backward_params(const DenseGeometry& g, std::span<const double> in,
                           std::span<const double> grad_out, std::span<double> grad_weight,
                           std::span<double> grad_bias);

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_params(const Conv2dGeometry& g, std::span<const double> in,
                            std::span<const double> grad_out, std::span<double> grad_weight,
                            std::span<double> grad_bias);

void dense_forward(const DenseGeometry& g, std::span<const double> in, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> out);
void dense_backward_input(const DenseGeometry& g, std::span<const double> grad_out,
                          std::span<const double> weight, std::span<double> grad_in);
void dense_backward_params(const DenseGeometry& g, std::span<const double> in,
                           std::span<const double> grad_out, std::span<double> grad_weight,
                           std::span<double> grad_bias);

}  // namespace serial

}  // namespace hatebm::kernels
