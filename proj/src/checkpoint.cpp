#include "hatebm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hatebm/error.hpp"

namespace hatebm {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

using nlohmann::json;

void Checkpoint::put(std::string name, Tensor t) {
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(t));
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

namespace {

std::uint64_t fnv_bytes(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json index = json::array();
  std::uint64_t offset = 0;
  std::uint64_t hash = 1469598103934665603ULL;
  for (const auto& [name, t] : ck.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
    hash = fnv_bytes(t.data(), t.size() * sizeof(double), hash);
  }
  const json header = {{"meta", ck.meta}, {"tensors", index}, {"payload_hash", hash}};
  const std::string text = header.dump();

  // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& entry : ck.tensors) {
      out.write(reinterpret_cast<const char*>(entry.second.data()),
                static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
    }
    if (!out) throw IoError("short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError(path.string() + " is not a checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 32)) throw IoError("checkpoint " + path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint " + path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + ": corrupt header (" + e.what() + ")");
  }
  Checkpoint ck;
  ck.meta = header.at("meta");
  std::uint64_t hash = 1469598103934665603ULL;
  for (const json& e : header.at("tensors")) {
    Tensor t(e.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint " + path.string() + ": truncated payload");
    hash = fnv_bytes(t.data(), t.size() * sizeof(double), hash);
    ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  if (hash != header.at("payload_hash").get<std::uint64_t>()) {
    throw IoError("checkpoint " + path.string() + ": payload hash mismatch");
  }
  return ck;
}

json arch_to_json(const ArchConfig& c) {
  return {{"image_shape", c.image_shape},
          {"latent_shape", c.latent_shape},
          {"topology", to_string(c.topology)},
          {"hat_width", c.hat_width},
          {"hat_depth", c.hat_depth},
          {"hat_activation", to_string(c.hat_activation)},
          {"gen_width", c.gen_width},
          {"gen_depth", c.gen_depth},
          {"gen_activation", to_string(c.gen_activation)},
          {"gen_norm", c.gen_norm}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig c;
  try {
    c.image_shape = j.at("image_shape").get<Shape>();
    c.latent_shape = j.at("latent_shape").get<Shape>();
    c.topology = topology_from_string(j.at("topology").get<std::string>());
    c.hat_width = j.at("hat_width").get<std::size_t>();
    c.hat_depth = j.at("hat_depth").get<std::size_t>();
    c.hat_activation = activation_from_string(j.at("hat_activation").get<std::string>());
    c.gen_width = j.at("gen_width").get<std::size_t>();
    c.gen_depth = j.at("gen_depth").get<std::size_t>();
    c.gen_activation = activation_from_string(j.at("gen_activation").get<std::string>());
    c.gen_norm = j.at("gen_norm").get<bool>();
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint architecture record is malformed: ") + e.what());
  }
  return c;
}

void put_model(Checkpoint& ck, const std::string& prefix, const Model& model) {
  model.net->check_params(model.params);
  ck.meta[prefix] = {{"kind", to_string(model.net->kind())},
                     {"arch", arch_to_json(model.net->config())},
                     {"arch_hash", model.params.arch_hash},
                     {"params", model.params.names}};
  for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
    ck.put(prefix + "/" + model.params.names[i], model.params.tensors[i]);
  }
}

namespace {

std::shared_ptr<const Network> make_net(NetKind kind, const ArchConfig& cfg) {
  switch (kind) {
    case NetKind::hat:
      return make_hat_network(cfg);
    case NetKind::generator:
      return make_generator(cfg);
    case NetKind::inference:
      return make_inference_network(cfg);
  }
  throw IoError("unknown network kind");
}

}  // namespace

Model get_model(const Checkpoint& ck, const std::string& prefix, const ArchConfig* expected) {
  if (!ck.meta.contains(prefix)) throw IoError("checkpoint has no model '" + prefix + "'");
  const json& m = ck.meta.at(prefix);
  const NetKind kind = net_kind_from_string(m.at("kind").get<std::string>());
  const ArchConfig arch = arch_from_json(m.at("arch"));
  if (expected && expected->hash() != arch.hash()) {
    throw IoError("checkpoint model '" + prefix + "' architecture hash mismatch: stored [" + arch.canonical() +
                  "], expected [" + expected->canonical() + "]");
  }
  auto net = make_net(kind, arch);
  if (net->arch_hash() != m.at("arch_hash").get<std::uint64_t>()) {
    throw IoError("checkpoint model '" + prefix + "' architecture hash mismatch");
  }
  Rng scratch(0);
  ParamSet p = net->init_params(scratch);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Tensor& t = ck.get(prefix + "/" + p.names[i]);
    if (t.shape() != p.tensors[i].shape()) {
      throw IoError("checkpoint tensor " + prefix + "/" + p.names[i] + " has shape " + shape_string(t.shape()) +
                    ", network expects " + shape_string(p.tensors[i].shape()));
    }
    p.tensors[i] = t;
  }
  return Model{std::move(net), std::move(p)};
}

void save_model(const std::filesystem::path& path, const Model& model) {
  Checkpoint ck;
  ck.meta["format"] = "model";
  put_model(ck, "model", model);
  write_checkpoint(path, ck);
}

Model load_model(const std::filesystem::path& path, const ArchConfig* expected) {
  return get_model(read_checkpoint(path), "model", expected);
}

namespace {

void put_moments(Checkpoint& ck, const std::string& prefix, const Optimizer& opt) {
  const ParamSet& m = opt.first_moment();
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    ck.put(prefix + ".m/" + m.names[i], m.tensors[i]);
    ck.put(prefix + ".v/" + m.names[i], opt.second_moment().tensors[i]);
  }
}

void get_moments(const Checkpoint& ck, const std::string& prefix, Optimizer& opt, std::uint64_t t) {
  ParamSet& m = opt.first_moment();
  ParamSet& v = opt.second_moment();
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    const Tensor& tm = ck.get(prefix + ".m/" + m.names[i]);
    const Tensor& tv = ck.get(prefix + ".v/" + m.names[i]);
    if (tm.shape() != m.tensors[i].shape() || tv.shape() != v.tensors[i].shape()) {
      throw IoError("checkpoint optimizer state " + prefix + " does not match the network");
    }
    m.tensors[i] = tm;
    v.tensors[i] = tv;
  }
  opt.set_iterations(t);
}

constexpr std::size_t kLogColumns = 8;

}  // namespace

Checkpoint train_state_checkpoint(const TrainState& s, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.meta["format"] = "train_state";
  put_model(ck, "hat", s.hat);
  put_model(ck, "generator", s.generator);
  put_moments(ck, "hat_opt", s.hat_opt);
  put_moments(ck, "gen_opt", s.gen_opt);
  const bool bank = s.bank.capacity() > 0;
  if (bank) {
    ck.put("bank/x", s.bank.x());
    ck.put("bank/z", s.bank.z());
  }
  Tensor log(Shape{s.log.size(), kLogColumns});
  for (std::size_t i = 0; i < s.log.size(); ++i) {
    const MetricRow& r = s.log[i];
    const double row[kLogColumns] = {static_cast<double>(r.step), r.ebm_loss,      r.gen_loss,   r.energy_gap,
                                     r.hat_grad_norm,             r.gen_grad_norm, r.pos_energy, r.neg_energy};
    std::copy(row, row + kLogColumns, log.data() + i * kLogColumns);
  }
  ck.put("log", std::move(log));
  ck.meta["train"] = {{"mode", to_string(cfg.mode)},
                      {"step", s.step},
                      {"rng", s.rng.state()},
                      {"data_epoch", s.data_epoch},
                      {"data_cursor", s.data_cursor},
                      {"hat_opt_t", s.hat_opt.iterations()},
                      {"gen_opt_t", s.gen_opt.iterations()},
                      {"bank", bank}};
  return ck;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg) {
  write_checkpoint(path, train_state_checkpoint(state, cfg));
}

TrainState train_state_from_checkpoint(const Checkpoint& ck, const TrainConfig& cfg, const ArchConfig* expected) {
  if (ck.meta.value("format", "") != "train_state") throw IoError("checkpoint does not hold a training state");
  const json& t = ck.meta.at("train");
  if (t.at("mode").get<std::string>() != to_string(cfg.mode)) {
    throw ConfigError("checkpoint was written in mode '" + t.at("mode").get<std::string>() + "', config asks for '" +
                      to_string(cfg.mode) + "'");
  }
  TrainState s;
  s.hat = get_model(ck, "hat", expected);
  s.generator = get_model(ck, "generator", expected);
  s.hat_opt = Optimizer(s.hat.params, cfg.hat_optimizer);
  s.gen_opt = Optimizer(s.generator.params, cfg.gen_optimizer);
  get_moments(ck, "hat_opt", s.hat_opt, t.at("hat_opt_t").get<std::uint64_t>());
  get_moments(ck, "gen_opt", s.gen_opt, t.at("gen_opt_t").get<std::uint64_t>());
  if (t.at("bank").get<bool>()) s.bank = SampleBank(ck.get("bank/x"), ck.get("bank/z"));
  s.step = t.at("step").get<std::size_t>();
  s.rng.set_state(t.at("rng").get<std::string>());
  s.data_epoch = t.at("data_epoch").get<std::size_t>();
  s.data_cursor = t.at("data_cursor").get<std::size_t>();
  const Tensor& log = ck.get("log");
  if (log.rank() != 2 || log.dim(1) != kLogColumns) throw IoError("checkpoint metric log is malformed");
  for (std::size_t i = 0; i < log.dim(0); ++i) {
    const double* r = log.data() + i * kLogColumns;
    s.log.push_back(MetricRow{static_cast<std::size_t>(r[0]), r[1], r[2], r[3], r[4], r[5], r[6], r[7]});
  }
  return s;
}

TrainState load_train_state(const std::filesystem::path& path, const TrainConfig& cfg, const ArchConfig* expected) {
  return train_state_from_checkpoint(read_checkpoint(path), cfg, expected);
}

}  // namespace hatebm
