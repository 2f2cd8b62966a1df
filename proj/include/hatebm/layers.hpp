#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "hatebm/kernels.hpp"
#include "hatebm/tensor.hpp"

namespace hatebm {

enum class NetKind { hat, generator, inference };

const char* to_string(NetKind kind);
NetKind net_kind_from_string(const std::string& s);

// Named parameter tensors of one network plus the identity of the
// architecture they belong to.
struct ParamSet {
  NetKind kind = NetKind::hat;
  std::uint64_t arch_hash = 0;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t count() const;  // total scalar parameters
  ParamSet zeros_like() const;
  void set_zero();
  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);
};

// Intermediates recorded by a forward pass for the matching backward pass.
struct Tape {
  std::vector<Tensor> saved;
  std::vector<Tape> children;
};

enum class InitKind { fan_in_normal, zeros, ones };

struct ParamSlot {
  std::string name;
  Shape shape;
  InitKind init = InitKind::zeros;
  double fan_in = 1.0;
  double gain = 1.0;
};

// Collects parameter declarations while a network is assembled.
class ParamLayout {
 public:
  std::size_t add(std::string name, Shape shape, InitKind init, double fan_in = 1.0, double gain = 1.0);
  const std::vector<ParamSlot>& slots() const { return slots_; }

 private:
  std::vector<ParamSlot> slots_;
};

enum class Activation { identity, relu, leaky_relu, silu, tanh, softplus };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

// A differentiable map between per-sample shapes. Layers are immutable
// after construction; parameters live in a ParamSet passed to every call,
// so one layer object can serve concurrent forward passes.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Shape output_shape() const = 0;
  virtual Tensor forward(const ParamSet& params, const Tensor& x, Tape* tape) const = 0;
  // Gradient w.r.t. the layer input; accumulates parameter gradients into
  // `grads` when it is non-null.
  virtual Tensor backward(const ParamSet& params, const Tape& tape, const Tensor& grad_out,
                          ParamSet* grads) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

class Sequential final : public Layer {
 public:
  explicit Sequential(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  void push(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  bool empty() const { return layers_.empty(); }
  const Shape& input_shape() const { return input_shape_; }

  Shape output_shape() const override;
  Tensor forward(const ParamSet& params, const Tensor& x, Tape* tape) const override;
  Tensor backward(const ParamSet& params, const Tape& tape, const Tensor& grad_out,
                  ParamSet* grads) const override;

 private:
  Shape input_shape_;
  std::vector<LayerPtr> layers_;
};

// Layer constructors. Shapes are per sample: (h, w, c) for images, (m) for
// vectors.
LayerPtr make_conv2d(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out_c,
                     std::size_t kernel, std::size_t stride, double gain = 1.0);
LayerPtr make_dense(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out,
                    double gain = 1.0);
LayerPtr make_activation(const Shape& in, Activation a);
// Per-channel affine map standing in for batch norm with frozen statistics
// (mean 0, variance 1); never looks at the batch.
LayerPtr make_fixed_norm(ParamLayout& layout, const std::string& name, const Shape& in);
LayerPtr make_avg_pool2(const Shape& in);
LayerPtr make_upsample2(const Shape& in);
LayerPtr make_sum_pool(const Shape& in);
LayerPtr make_reshape(const Shape& in, const Shape& out);
// out = main(x) + shortcut(x); an empty shortcut is the identity.
LayerPtr make_residual(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut);

double activation_gain(Activation a);

}  // namespace hatebm
