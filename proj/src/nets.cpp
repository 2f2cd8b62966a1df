#include "hatebm/nets.hpp"

#include <cmath>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

const char* to_string(Topology t) { return t == Topology::conv ? "conv" : "mlp"; }

Topology topology_from_string(const std::string& s) {
  if (s == "conv") return Topology::conv;
  if (s == "mlp") return Topology::mlp;
  throw ConfigError("unknown topology '" + s + "'");
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < v) ++k;
  return k;
}

}  // namespace

void ArchConfig::validate() const {
  if (image_shape.size() != 3 || shape_size(image_shape) == 0) {
    throw ConfigError("arch: image shape must be (h, w, c) with nonzero entries");
  }
  if (latent_shape.empty() || latent_shape.size() == 2 || latent_shape.size() > 3 || latent_size() == 0) {
    throw ConfigError("arch: latent shape must be (m) or (h, w, c), got " + shape_string(latent_shape));
  }
  if (hat_width == 0 || gen_width == 0) throw ConfigError("arch: widths must be positive");
  if (topology == Topology::conv) {
    const std::size_t h = image_shape[0], w = image_shape[1];
    const std::size_t scale = std::size_t{1} << hat_depth;
    if (h % scale || w % scale) {
      throw ConfigError("arch: image size " + shape_string(image_shape) + " not divisible by 2^hat_depth");
    }
    if (image_latent()) {
      const std::size_t lh = latent_shape[0], lw = latent_shape[1];
      if (h % lh || w % lw || h / lh != w / lw || !is_power_of_two(h / lh)) {
        throw ConfigError("arch: image latent " + shape_string(latent_shape) +
                          " must divide the image size by a power of two");
      }
      if (log2_exact(h / lh) > gen_depth) {
        throw ConfigError("arch: gen_depth too small to upsample the image latent");
      }
    } else {
      const std::size_t scale_g = std::size_t{1} << gen_depth;
      if (h % scale_g || w % scale_g) {
        throw ConfigError("arch: image size not divisible by 2^gen_depth");
      }
    }
  }
}

std::string ArchConfig::canonical() const {
  std::ostringstream os;
  os << "image=" << shape_string(image_shape) << ";latent=" << shape_string(latent_shape)
     << ";topology=" << to_string(topology) << ";hat_width=" << hat_width << ";hat_depth=" << hat_depth
     << ";hat_activation=" << to_string(hat_activation) << ";gen_width=" << gen_width
     << ";gen_depth=" << gen_depth << ";gen_activation=" << to_string(gen_activation)
     << ";gen_norm=" << (gen_norm ? 1 : 0);
  return os.str();
}

std::uint64_t ArchConfig::hash() const { return fnv1a64(canonical()); }

Network::Network(NetKind kind, ArchConfig cfg, std::unique_ptr<Sequential> body, ParamLayout layout)
    : kind_(kind),
      cfg_(std::move(cfg)),
      body_(std::move(body)),
      layout_(std::move(layout)),
      arch_hash_(fnv1a64(cfg_.canonical() + ";kind=" + to_string(kind))) {}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const ParamSlot& s : layout_.slots()) n += shape_size(s.shape);
  return n;
}

ParamSet Network::init_params(Rng& rng) const {
  ParamSet p;
  p.kind = kind_;
  p.arch_hash = arch_hash_;
  for (const ParamSlot& s : layout_.slots()) {
    Tensor t(s.shape);
    switch (s.init) {
      case InitKind::zeros:
        break;
      case InitKind::ones:
        t.fill(1.0);
        break;
      case InitKind::fan_in_normal:
        rng.fill_normal(t.values(), s.gain / std::sqrt(s.fan_in));
        break;
    }
    p.names.push_back(s.name);
    p.tensors.push_back(std::move(t));
  }
  return p;
}

void Network::check_params(const ParamSet& params) const {
  if (params.kind != kind_ || params.arch_hash != arch_hash_) {
    throw ConfigError(std::string("parameters do not belong to this ") + to_string(kind_) + " architecture");
  }
  const auto& slots = layout_.slots();
  if (params.tensors.size() != slots.size()) {
    throw ShapeError("parameter set has wrong number of tensors");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (params.tensors[i].shape() != slots[i].shape) {
      throw ShapeError("parameter " + slots[i].name + " has shape " + shape_string(params.tensors[i].shape()));
    }
  }
}

void Network::check_input(const Tensor& x) const {
  if (x.rank() != input_shape().size() + 1 || x.sample_shape() != input_shape() || x.batch() == 0) {
    throw ShapeError(std::string(to_string(kind_)) + " network expects per-sample input " +
                     shape_string(input_shape()) + ", got batch " + shape_string(x.shape()));
  }
}

Tensor Network::forward(const ParamSet& params, const Tensor& x) const {
  check_input(x);
  return body_->forward(params, x, nullptr);
}

Tensor Network::forward(const ParamSet& params, const Tensor& x, Tape& tape) const {
  check_input(x);
  return body_->forward(params, x, &tape);
}

Tensor Network::backward(const ParamSet& params, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const {
  return body_->backward(params, tape, grad_out, grads);
}

namespace {

// Pre-activation block that halves resolution:
// main = act, conv3x3/2, act, conv3x3; shortcut = avgpool, conv1x1.
LayerPtr down_block(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out_c, Activation act) {
  const double gain = activation_gain(act);
  auto main = std::make_unique<Sequential>(in);
  main->push(make_activation(in, act));
  main->push(make_conv2d(layout, name + ".conv1", in, out_c, 3, 2, gain));
  main->push(make_activation(main->output_shape(), act));
  main->push(make_conv2d(layout, name + ".conv2", main->output_shape(), out_c, 3, 1, gain));
  auto shortcut = std::make_unique<Sequential>(in);
  shortcut->push(make_avg_pool2(in));
  shortcut->push(make_conv2d(layout, name + ".skip", shortcut->output_shape(), out_c, 1, 1));
  return make_residual(std::move(main), std::move(shortcut));
}

// Same-resolution pre-activation block, optionally upsampling by two.
LayerPtr gen_block(ParamLayout& layout, const std::string& name, const Shape& in, std::size_t out_c, Activation act,
                   bool norm, bool upsample) {
  const double gain = activation_gain(act);
  auto main = std::make_unique<Sequential>(in);
  if (norm) main->push(make_fixed_norm(layout, name + ".norm1", in));
  main->push(make_activation(in, act));
  if (upsample) main->push(make_upsample2(main->output_shape()));
  main->push(make_conv2d(layout, name + ".conv1", main->output_shape(), out_c, 3, 1, gain));
  if (norm) main->push(make_fixed_norm(layout, name + ".norm2", main->output_shape()));
  main->push(make_activation(main->output_shape(), act));
  main->push(make_conv2d(layout, name + ".conv2", main->output_shape(), out_c, 3, 1, gain));
  auto shortcut = std::make_unique<Sequential>(in);
  if (upsample) shortcut->push(make_upsample2(in));
  if (in.back() != out_c) {
    shortcut->push(make_conv2d(layout, name + ".skip", shortcut->output_shape(), out_c, 1, 1));
  }
  return make_residual(std::move(main), std::move(shortcut));
}

void push_mlp_trunk(Sequential& seq, ParamLayout& layout, const std::string& prefix, std::size_t width,
                    std::size_t depth, Activation act, bool norm) {
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string name = prefix + ".fc" + std::to_string(i);
    seq.push(make_dense(layout, name, seq.output_shape(), width, activation_gain(act)));
    if (norm) seq.push(make_fixed_norm(layout, name + ".norm", seq.output_shape()));
    seq.push(make_activation(seq.output_shape(), act));
  }
}

Shape flat(const Shape& s) { return Shape{shape_size(s)}; }

}  // namespace

std::shared_ptr<const Network> make_hat_network(const ArchConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto body = std::make_unique<Sequential>(cfg.image_shape);
  if (cfg.topology == Topology::mlp) {
    body->push(make_reshape(cfg.image_shape, flat(cfg.image_shape)));
    push_mlp_trunk(*body, layout, "hat", cfg.hat_width, cfg.hat_depth, cfg.hat_activation, false);
    body->push(make_dense(layout, "hat.out", body->output_shape(), 1));
  } else {
    body->push(make_conv2d(layout, "hat.stem", cfg.image_shape, cfg.hat_width, 3, 1));
    for (std::size_t b = 0; b < cfg.hat_depth; ++b) {
      body->push(down_block(layout, "hat.block" + std::to_string(b), body->output_shape(), cfg.hat_width,
                            cfg.hat_activation));
    }
    body->push(make_activation(body->output_shape(), cfg.hat_activation));
    body->push(make_sum_pool(body->output_shape()));
    body->push(make_dense(layout, "hat.out", body->output_shape(), 1));
  }
  return std::make_shared<Network>(NetKind::hat, cfg, std::move(body), std::move(layout));
}

std::shared_ptr<const Network> make_generator(const ArchConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto body = std::make_unique<Sequential>(cfg.latent_shape);
  const Activation act = cfg.gen_activation;
  if (cfg.topology == Topology::mlp) {
    if (cfg.image_latent()) body->push(make_reshape(cfg.latent_shape, flat(cfg.latent_shape)));
    push_mlp_trunk(*body, layout, "gen", cfg.gen_width, cfg.gen_depth, act, cfg.gen_norm);
    body->push(make_dense(layout, "gen.out", body->output_shape(), shape_size(cfg.image_shape)));
    body->push(make_reshape(body->output_shape(), cfg.image_shape));
  } else {
    const std::size_t h = cfg.image_shape[0], w = cfg.image_shape[1];
    std::size_t upsamples = cfg.gen_depth;
    if (cfg.image_latent()) {
      // Convolutional stem in place of the fully connected base.
      upsamples = log2_exact(h / cfg.latent_shape[0]);
      body->push(make_conv2d(layout, "gen.stem", cfg.latent_shape, cfg.gen_width, 3, 1));
    } else {
      const std::size_t bh = h >> cfg.gen_depth, bw = w >> cfg.gen_depth;
      body->push(make_dense(layout, "gen.base", cfg.latent_shape, bh * bw * cfg.gen_width));
      body->push(make_reshape(body->output_shape(), Shape{bh, bw, cfg.gen_width}));
    }
    for (std::size_t b = 0; b < cfg.gen_depth; ++b) {
      const bool up = b >= cfg.gen_depth - upsamples;
      body->push(gen_block(layout, "gen.block" + std::to_string(b), body->output_shape(), cfg.gen_width, act,
                           cfg.gen_norm, up));
    }
    if (cfg.gen_norm) body->push(make_fixed_norm(layout, "gen.norm", body->output_shape()));
    body->push(make_activation(body->output_shape(), act));
    body->push(make_conv2d(layout, "gen.out", body->output_shape(), cfg.image_shape[2], 3, 1));
  }
  body->push(make_activation(body->output_shape(), Activation::tanh));
  return std::make_shared<Network>(NetKind::generator, cfg, std::move(body), std::move(layout));
}

std::shared_ptr<const Network> make_inference_network(const ArchConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto body = std::make_unique<Sequential>(cfg.image_shape);
  const Activation act = cfg.gen_activation;
  if (cfg.topology == Topology::mlp) {
    body->push(make_reshape(cfg.image_shape, flat(cfg.image_shape)));
    push_mlp_trunk(*body, layout, "inf", cfg.gen_width, cfg.gen_depth, act, false);
    body->push(make_dense(layout, "inf.out", body->output_shape(), cfg.latent_size()));
    if (cfg.image_latent()) body->push(make_reshape(body->output_shape(), cfg.latent_shape));
  } else {
    body->push(make_conv2d(layout, "inf.stem", cfg.image_shape, cfg.gen_width, 3, 1));
    std::size_t downs = cfg.gen_depth;
    std::size_t same = 0;
    if (cfg.image_latent()) {
      downs = log2_exact(cfg.image_shape[0] / cfg.latent_shape[0]);
      same = cfg.gen_depth > downs ? cfg.gen_depth - downs : 0;
    }
    for (std::size_t b = 0; b < same; ++b) {
      body->push(gen_block(layout, "inf.same" + std::to_string(b), body->output_shape(), cfg.gen_width, act, false,
                           false));
    }
    for (std::size_t b = 0; b < downs; ++b) {
      body->push(down_block(layout, "inf.block" + std::to_string(b), body->output_shape(), cfg.gen_width, act));
    }
    body->push(make_activation(body->output_shape(), act));
    if (cfg.image_latent()) {
      body->push(make_conv2d(layout, "inf.out", body->output_shape(), cfg.latent_shape[2], 3, 1));
    } else {
      body->push(make_reshape(body->output_shape(), flat(body->output_shape())));
      body->push(make_dense(layout, "inf.out", body->output_shape(), cfg.latent_size()));
    }
  }
  return std::make_shared<Network>(NetKind::inference, cfg, std::move(body), std::move(layout));
}

Model build_network(NetKind kind, const ArchConfig& cfg, Rng& rng) {
  std::shared_ptr<const Network> net;
  switch (kind) {
    case NetKind::hat:
      net = make_hat_network(cfg);
      break;
    case NetKind::generator:
      net = make_generator(cfg);
      break;
    case NetKind::inference:
      net = make_inference_network(cfg);
      break;
  }
  ParamSet params = net->init_params(rng);
  return Model{std::move(net), std::move(params)};
}

Model build_hat_network(const ArchConfig& cfg, Rng& rng) { return build_network(NetKind::hat, cfg, rng); }
Model build_generator(const ArchConfig& cfg, Rng& rng) { return build_network(NetKind::generator, cfg, rng); }
Model build_inference_network(const ArchConfig& cfg, Rng& rng) {
  return build_network(NetKind::inference, cfg, rng);
}

LatentBatch sphere_project(const LatentBatch& v) {
  if (v.batch() == 0) throw ShapeError("sphere_project: empty batch");
  const std::size_t m = v.sample_size();
  const double radius = std::sqrt(static_cast<double>(m));
  LatentBatch out(v.shape());
  for (std::size_t i = 0; i < v.batch(); ++i) {
    const auto in = v.sample(i);
    double sq = 0.0;
    for (double x : in) sq += x * x;
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw ContractError("sphere_project: latent " + std::to_string(i) + " has zero or non-finite norm");
    }
    const double scale = radius / std::sqrt(sq);
    auto o = out.sample(i);
    for (std::size_t k = 0; k < m; ++k) o[k] = in[k] * scale;
  }
  return out;
}

LatentBatch sphere_project_backward(const LatentBatch& v, const LatentBatch& grad_out) {
  require_same_shape(v, grad_out, "sphere_project_backward");
  const std::size_t m = v.sample_size();
  const double radius = std::sqrt(static_cast<double>(m));
  LatentBatch g(v.shape());
  for (std::size_t i = 0; i < v.batch(); ++i) {
    const auto in = v.sample(i);
    const auto go = grad_out.sample(i);
    double sq = 0.0, vg = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      sq += in[k] * in[k];
      vg += in[k] * go[k];
    }
    const double norm = std::sqrt(sq);
    auto o = g.sample(i);
    for (std::size_t k = 0; k < m; ++k) o[k] = radius / norm * (go[k] - in[k] * vg / sq);
  }
  return g;
}

}  // namespace hatebm
