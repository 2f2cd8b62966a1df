#include "hatebm/layers.hpp"

#include <algorithm>
#include <cmath>

#include "hatebm/error.hpp"

namespace hatebm {

const char* to_string(NetKind kind) {
  switch (kind) {
    case NetKind::hat:
      return "hat";
    case NetKind::generator:
      return "generator";
    case NetKind::inference:
      return "inference";
  }
  return "?";
}

NetKind net_kind_from_string(const std::string& s) {
  if (s == "hat") return NetKind::hat;
  if (s == "generator") return NetKind::generator;
  if (s == "inference") return NetKind::inference;
  throw ConfigError("unknown network kind '" + s + "'");
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

void ParamSet::set_zero() {
  for (Tensor& t : tensors) t.fill(0.0);
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const Tensor& t : tensors) s += hatebm::squared_norm(t);
  return s;
}

bool ParamSet::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  return a.kind == b.kind && a.arch_hash == b.arch_hash && a.names == b.names && a.tensors == b.tensors;
}

std::size_t ParamLayout::add(std::string name, Shape shape, InitKind init, double fan_in, double gain) {
  slots_.push_back(ParamSlot{std::move(name), std::move(shape), init, fan_in, gain});
  return slots_.size() - 1;
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::silu:
      return "silu";
    case Activation::tanh:
      return "tanh";
    case Activation::softplus:
      return "softplus";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  for (Activation a : {Activation::identity, Activation::relu, Activation::leaky_relu, Activation::silu,
                       Activation::tanh, Activation::softplus}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown activation '" + s + "'");
}

double activation_gain(Activation a) {
  switch (a) {
    case Activation::relu:
    case Activation::silu:
    case Activation::softplus:
      return std::sqrt(2.0);
    case Activation::leaky_relu:
      return std::sqrt(2.0 / (1.0 + 0.2 * 0.2));
    default:
      return 1.0;
  }
}

namespace {

constexpr double kLeakySlope = 0.2;

void check_input(const Tensor& x, const Shape& expected, const char* layer) {
  if (x.rank() != expected.size() + 1 || x.sample_shape() != expected) {
    throw ShapeError(std::string(layer) + ": expected per-sample shape " + shape_string(expected) + ", got " +
                     shape_string(x.shape()));
  }
}

Shape batched(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

class Conv2d final : public Layer {
 public:
  Conv2d(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out_c, std::size_t kernel,
         std::size_t stride, double gain)
      : in_(in) {
    if (in.size() != 3) throw ShapeError("conv2d expects (h, w, c) input, got " + shape_string(in));
    geom_.in_h = in[0];
    geom_.in_w = in[1];
    geom_.in_c = in[2];
    geom_.out_c = out_c;
    geom_.kernel = kernel;
    geom_.stride = stride;
    geom_.pad = kernel / 2;
    const double fan_in = static_cast<double>(kernel * kernel * in[2]);
    weight_ = layout.add(name + ".w", Shape{kernel, kernel, in[2], out_c}, InitKind::fan_in_normal, fan_in, gain);
    bias_ = layout.add(name + ".b", Shape{out_c}, InitKind::zeros);
  }

  Shape output_shape() const override { return Shape{geom_.out_h(), geom_.out_w(), geom_.out_c}; }

  Tensor forward(const ParamSet& p, const Tensor& x, Tape* tape) const override {
    check_input(x, in_, "conv2d");
    kernels::Conv2dGeometry g = geom_;
    g.batch = x.batch();
    Tensor out(batched(g.batch, output_shape()));
    kernels::conv2d_forward(g, x.values(), p.tensors[weight_].values(), p.tensors[bias_].values(), out.values());
    if (tape) tape->saved = {x};
    return out;
  }

  Tensor backward(const ParamSet& p, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const override {
    const Tensor& x = tape.saved.at(0);
    kernels::Conv2dGeometry g = geom_;
    g.batch = x.batch();
    Tensor grad_in(x.shape());
    kernels::conv2d_backward_input(g, grad_out.values(), p.tensors[weight_].values(), grad_in.values());
    if (grads) {
      kernels::conv2d_backward_params(g, x.values(), grad_out.values(), grads->tensors[weight_].values(),
                                      grads->tensors[bias_].values());
    }
    return grad_in;
  }

 private:
  Shape in_;
  kernels::Conv2dGeometry geom_;
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

class Dense final : public Layer {
 public:
  Dense(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out, double gain) : in_(in) {
    if (in.size() != 1) throw ShapeError("dense expects vector input, got " + shape_string(in));
    geom_.in = in[0];
    geom_.out = out;
    weight_ = layout.add(name + ".w", Shape{in[0], out}, InitKind::fan_in_normal, static_cast<double>(in[0]), gain);
    bias_ = layout.add(name + ".b", Shape{out}, InitKind::zeros);
  }

  Shape output_shape() const override { return Shape{geom_.out}; }

  Tensor forward(const ParamSet& p, const Tensor& x, Tape* tape) const override {
    check_input(x, in_, "dense");
    kernels::DenseGeometry g = geom_;
    g.batch = x.batch();
    Tensor out(Shape{g.batch, g.out});
    kernels::dense_forward(g, x.values(), p.tensors[weight_].values(), p.tensors[bias_].values(), out.values());
    if (tape) tape->saved = {x};
    return out;
  }

  Tensor backward(const ParamSet& p, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const override {
    const Tensor& x = tape.saved.at(0);
    kernels::DenseGeometry g = geom_;
    g.batch = x.batch();
    Tensor grad_in(x.shape());
    kernels::dense_backward_input(g, grad_out.values(), p.tensors[weight_].values(), grad_in.values());
    if (grads) {
      kernels::dense_backward_params(g, x.values(), grad_out.values(), grads->tensors[weight_].values(),
                                     grads->tensors[bias_].values());
    }
    return grad_in;
  }

 private:
  Shape in_;
  kernels::DenseGeometry geom_;
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(const Shape& in, Activation a) : in_(in), act_(a) {}

  Shape output_shape() const override { return in_; }

  Tensor forward(const ParamSet&, const Tensor& x, Tape* tape) const override {
    check_input(x, in_, "activation");
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::size_t n = x.size();
    switch (act_) {
      case Activation::identity:
        std::copy_n(px, n, po);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
        break;
      case Activation::leaky_relu:
        for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : kLeakySlope * px[i];
        break;
      case Activation::silu:
        for (std::size_t i = 0; i < n; ++i) po[i] = px[i] / (1.0 + std::exp(-px[i]));
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
        break;
      case Activation::softplus:
        for (std::size_t i = 0; i < n; ++i) {
          po[i] = px[i] > 0.0 ? px[i] + std::log1p(std::exp(-px[i])) : std::log1p(std::exp(px[i]));
        }
        break;
    }
    if (tape) tape->saved = {act_ == Activation::tanh ? out : x};
    return out;
  }

  Tensor backward(const ParamSet&, const Tape& tape, const Tensor& grad_out, ParamSet*) const override {
    const Tensor& s = tape.saved.at(0);
    Tensor g(grad_out.shape());
    const double* ps = s.data();
    const double* pg = grad_out.data();
    double* po = g.data();
    const std::size_t n = g.size();
    switch (act_) {
      case Activation::identity:
        std::copy_n(pg, n, po);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) po[i] = ps[i] > 0.0 ? pg[i] : 0.0;
        break;
      case Activation::leaky_relu:
        for (std::size_t i = 0; i < n; ++i) po[i] = ps[i] > 0.0 ? pg[i] : kLeakySlope * pg[i];
        break;
      case Activation::silu:
        for (std::size_t i = 0; i < n; ++i) {
          const double sig = 1.0 / (1.0 + std::exp(-ps[i]));
          po[i] = pg[i] * sig * (1.0 + ps[i] * (1.0 - sig));
        }
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) po[i] = pg[i] * (1.0 - ps[i] * ps[i]);
        break;
      case Activation::softplus:
        for (std::size_t i = 0; i < n; ++i) po[i] = pg[i] / (1.0 + std::exp(-ps[i]));
        break;
    }
    return g;
  }

 private:
  Shape in_;
  Activation act_;
};

class FixedNorm final : public Layer {
 public:
  FixedNorm(ParamLayout& layout, const std::string& name, const Shape& in) : in_(in), channels_(in.back()) {
    gamma_ = layout.add(name + ".gamma", Shape{channels_}, InitKind::ones);
    beta_ = layout.add(name + ".beta", Shape{channels_}, InitKind::zeros);
  }

  Shape output_shape() const override { return in_; }

  Tensor forward(const ParamSet& p, const Tensor& x, Tape* tape) const override {
    check_input(x, in_, "fixed_norm");
    const double* gamma = p.tensors[gamma_].data();
    const double* beta = p.tensors[beta_].data();
    Tensor out(x.shape());
    const std::size_t rows = x.size() / channels_;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* px = x.data() + r * channels_;
      double* po = out.data() + r * channels_;
      for (std::size_t c = 0; c < channels_; ++c) po[c] = gamma[c] * px[c] + beta[c];
    }
    if (tape) tape->saved = {x};
    return out;
  }

  Tensor backward(const ParamSet& p, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const override {
    const Tensor& x = tape.saved.at(0);
    const double* gamma = p.tensors[gamma_].data();
    Tensor g(x.shape());
    const std::size_t rows = x.size() / channels_;
    double* ggamma = grads ? grads->tensors[gamma_].data() : nullptr;
    double* gbeta = grads ? grads->tensors[beta_].data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* px = x.data() + r * channels_;
      const double* pg = grad_out.data() + r * channels_;
      double* po = g.data() + r * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        po[c] = gamma[c] * pg[c];
        if (ggamma) {
          ggamma[c] += pg[c] * px[c];
          gbeta[c] += pg[c];
        }
      }
    }
    return g;
  }

 private:
  Shape in_;
  std::size_t channels_;
  std::size_t gamma_ = 0;
  std::size_t beta_ = 0;
};

class AvgPool2 final : public Layer {
 public:
  explicit AvgPool2(const Shape& in) : in_(in) {
    if (in.size() != 3 || in[0] % 2 || in[1] % 2) {
      throw ShapeError("avg_pool2 needs even (h, w, c) input, got " + shape_string(in));
    }
  }

  Shape output_shape() const override { return Shape{in_[0] / 2, in_[1] / 2, in_[2]}; }

  Tensor forward(const ParamSet&, const Tensor& x, Tape*) const override {
    check_input(x, in_, "avg_pool2");
    const std::size_t h = in_[0], w = in_[1], c = in_[2];
    Tensor out(batched(x.batch(), output_shape()));
    for (std::size_t n = 0; n < x.batch(); ++n) {
      for (std::size_t y = 0; y < h / 2; ++y) {
        for (std::size_t xx = 0; xx < w / 2; ++xx) {
          double* po = out.data() + ((n * (h / 2) + y) * (w / 2) + xx) * c;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const double* pi = x.data() + ((n * h + 2 * y + dy) * w + 2 * xx + dx) * c;
              for (std::size_t k = 0; k < c; ++k) po[k] += 0.25 * pi[k];
            }
          }
        }
      }
    }
    return out;
  }

  Tensor backward(const ParamSet&, const Tape&, const Tensor& grad_out, ParamSet*) const override {
    const std::size_t h = in_[0], w = in_[1], c = in_[2];
    const std::size_t n_batch = grad_out.batch();
    Tensor g(batched(n_batch, in_));
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double* pg = grad_out.data() + ((n * (h / 2) + y / 2) * (w / 2) + xx / 2) * c;
          double* po = g.data() + ((n * h + y) * w + xx) * c;
          for (std::size_t k = 0; k < c; ++k) po[k] = 0.25 * pg[k];
        }
      }
    }
    return g;
  }

 private:
  Shape in_;
};

class Upsample2 final : public Layer {
 public:
  explicit Upsample2(const Shape& in) : in_(in) {
    if (in.size() != 3) throw ShapeError("upsample2 needs (h, w, c) input, got " + shape_string(in));
  }

  Shape output_shape() const override { return Shape{in_[0] * 2, in_[1] * 2, in_[2]}; }

  Tensor forward(const ParamSet&, const Tensor& x, Tape*) const override {
    check_input(x, in_, "upsample2");
    const std::size_t h = in_[0], w = in_[1], c = in_[2];
    Tensor out(batched(x.batch(), output_shape()));
    for (std::size_t n = 0; n < x.batch(); ++n) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) {
          const double* pi = x.data() + ((n * h + y / 2) * w + xx / 2) * c;
          std::copy_n(pi, c, out.data() + ((n * 2 * h + y) * 2 * w + xx) * c);
        }
      }
    }
    return out;
  }

  Tensor backward(const ParamSet&, const Tape&, const Tensor& grad_out, ParamSet*) const override {
    const std::size_t h = in_[0], w = in_[1], c = in_[2];
    Tensor g(batched(grad_out.batch(), in_));
    for (std::size_t n = 0; n < grad_out.batch(); ++n) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) {
          const double* pg = grad_out.data() + ((n * 2 * h + y) * 2 * w + xx) * c;
          double* po = g.data() + ((n * h + y / 2) * w + xx / 2) * c;
          for (std::size_t k = 0; k < c; ++k) po[k] += pg[k];
        }
      }
    }
    return g;
  }

 private:
  Shape in_;
};

class SumPool final : public Layer {
 public:
  explicit SumPool(const Shape& in) : in_(in) {
    if (in.size() != 3) throw ShapeError("sum_pool needs (h, w, c) input, got " + shape_string(in));
  }

  Shape output_shape() const override { return Shape{in_[2]}; }

  Tensor forward(const ParamSet&, const Tensor& x, Tape*) const override {
    check_input(x, in_, "sum_pool");
    const std::size_t pixels = in_[0] * in_[1], c = in_[2];
    Tensor out(Shape{x.batch(), c});
    for (std::size_t n = 0; n < x.batch(); ++n) {
      for (std::size_t p = 0; p < pixels; ++p) {
        const double* pi = x.data() + (n * pixels + p) * c;
        for (std::size_t k = 0; k < c; ++k) out[n * c + k] += pi[k];
      }
    }
    return out;
  }

  Tensor backward(const ParamSet&, const Tape&, const Tensor& grad_out, ParamSet*) const override {
    const std::size_t pixels = in_[0] * in_[1], c = in_[2];
    Tensor g(batched(grad_out.batch(), in_));
    for (std::size_t n = 0; n < grad_out.batch(); ++n) {
      for (std::size_t p = 0; p < pixels; ++p) {
        std::copy_n(grad_out.data() + n * c, c, g.data() + (n * pixels + p) * c);
      }
    }
    return g;
  }

 private:
  Shape in_;
};

class Reshape final : public Layer {
 public:
  Reshape(const Shape& in, const Shape& out) : in_(in), out_(out) {
    if (shape_size(in) != shape_size(out)) {
      throw ShapeError("reshape " + shape_string(in) + " -> " + shape_string(out));
    }
  }

  Shape output_shape() const override { return out_; }

  Tensor forward(const ParamSet&, const Tensor& x, Tape*) const override {
    check_input(x, in_, "reshape");
    return x.reshaped(batched(x.batch(), out_));
  }

  Tensor backward(const ParamSet&, const Tape&, const Tensor& grad_out, ParamSet*) const override {
    return grad_out.reshaped(batched(grad_out.batch(), in_));
  }

 private:
  Shape in_;
  Shape out_;
};

class Residual final : public Layer {
 public:
  Residual(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut)
      : main_(std::move(main)), shortcut_(std::move(shortcut)) {
    const Shape expected = shortcut_->empty() ? shortcut_->input_shape() : shortcut_->output_shape();
    if (main_->output_shape() != expected || main_->input_shape() != shortcut_->input_shape()) {
      throw ShapeError("residual branches disagree: " + shape_string(main_->output_shape()) + " vs " +
                       shape_string(expected));
    }
  }

  Shape output_shape() const override { return main_->output_shape(); }

  Tensor forward(const ParamSet& p, const Tensor& x, Tape* tape) const override {
    if (tape) tape->children.resize(2);
    Tensor out = main_->forward(p, x, tape ? &tape->children[0] : nullptr);
    if (shortcut_->empty()) {
      out += x;
    } else {
      out += shortcut_->forward(p, x, tape ? &tape->children[1] : nullptr);
    }
    return out;
  }

  Tensor backward(const ParamSet& p, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const override {
    Tensor g = main_->backward(p, tape.children.at(0), grad_out, grads);
    if (shortcut_->empty()) {
      g += grad_out;
    } else {
      g += shortcut_->backward(p, tape.children.at(1), grad_out, grads);
    }
    return g;
  }

 private:
  std::unique_ptr<Sequential> main_;
  std::unique_ptr<Sequential> shortcut_;
};

}  // namespace

Shape Sequential::output_shape() const { return layers_.empty() ? input_shape_ : layers_.back()->output_shape(); }

Tensor Sequential::forward(const ParamSet& params, const Tensor& x, Tape* tape) const {
  if (tape) tape->children.resize(layers_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(params, h, tape ? &tape->children[i] : nullptr);
  }
  return h;
}

Tensor Sequential::backward(const ParamSet& params, const Tape& tape, const Tensor& grad_out,
                            ParamSet* grads) const {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(params, tape.children.at(i), g, grads);
  }
  return g;
}

LayerPtr make_conv2d(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out_c,
                     std::size_t kernel, std::size_t stride, double gain) {
  return std::make_unique<Conv2d>(layout, name, in, out_c, kernel, stride, gain);
}

LayerPtr make_dense(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out, double gain) {
  return std::make_unique<Dense>(layout, name, in, out, gain);
}

LayerPtr make_activation(const Shape& in, Activation a) { return std::make_unique<ActivationLayer>(in, a); }

LayerPtr make_fixed_norm(ParamLayout& layout, const std::string& name, const Shape& in) {
  return std::make_unique<FixedNorm>(layout, name, in);
}

LayerPtr make_avg_pool2(const Shape& in) { return std::make_unique<AvgPool2>(in); }

LayerPtr make_upsample2(const Shape& in) { return std::make_unique<Upsample2>(in); }

LayerPtr make_sum_pool(const Shape& in) { return std::make_unique<SumPool>(in); }

LayerPtr make_reshape(const Shape& in, const Shape& out) { return std::make_unique<Reshape>(in, out); }

LayerPtr make_residual(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut) {
  return std::make_unique<Residual>(std::move(main), std::move(shortcut));
}

}  // namespace hatebm
