#include "hatebm/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

using nlohmann::json;

void ExperimentConfig::validate() const {
  arch.validate();
  train.validate();
  if (data.image_shape != arch.image_shape) throw ConfigError("data.image_shape and architecture disagree");
  if (run.checkpoint_every == 0) throw ConfigError("run.checkpoint_every must be positive");
  if (run.grid_count == 0) throw ConfigError("run.grid_count must be positive");
  if (run.monitor.window == 0) throw ConfigError("monitor.window must be positive");
  if (autoencoder.batch_size == 0) throw ConfigError("ae.batch_size must be positive");
  if (sample.count == 0) throw ConfigError("sample.count must be positive");
  if (metrics.samples < 2) throw ConfigError("metrics.samples must be at least 2");
}

ExperimentConfig preset(TrainMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.train.mode = mode;
  c.train.batch_size = 128;
  c.train.epsilon_data = 1e-3;
  c.train.hat_optimizer.type = OptimizerType::adam;
  switch (mode) {
    case TrainMode::synthesis:
      c.train.steps = 75000;
      c.train.hat_optimizer.lr = 1e-4;
      c.train.gen_optimizer.lr = 1e-4;
      c.train.langevin.eps_image = 5e-4;
      c.train.langevin.eps_latent = 0.0;
      c.train.langevin.steps = 50;
      c.train.langevin.temperature = 1e-3;
      c.train.bank_capacity = 10000;
      c.train.energy = EnergyKind::conditional;
      break;
    case TrainMode::retrofit:
      c.arch.latent_shape = {16, 16, 1};
      c.train.steps = 30000;
      c.train.hat_optimizer.lr = 1e-4;
      c.train.gen_optimizer.lr = 0.0;
      c.train.langevin.eps_image = 5e-4;
      c.train.langevin.eps_latent = 1e-3;
      c.train.langevin.steps = 100;
      c.train.langevin.temperature = 1e-3;
      c.train.energy = EnergyKind::joint_with_prior;
      c.train.prior_sigma = 0.1;
      break;
    case TrainMode::refine:
      c.train.steps = 20000;
      c.train.hat_optimizer.lr = 1e-5;
      c.train.gen_optimizer.lr = 0.0;
      c.train.langevin.eps_image = 1e-4;
      c.train.langevin.eps_latent = 5e-3;
      c.train.langevin.steps = 250;
      c.train.langevin.temperature = 1e-3;
      c.train.energy = EnergyKind::joint_with_prior;
      c.train.prior_sigma = 0.25;
      break;
  }
  c.data.batch_size = c.train.batch_size;
  return c;
}

namespace {

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const json&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

template <class T, class Access>
Key field(std::string name, Access access) {
  return Key{std::move(name), [access](ExperimentConfig& c, const json& v) { access(c) = v.get<T>(); },
             [access](const ExperimentConfig& c) { return json(access(const_cast<ExperimentConfig&>(c))); }};
}

template <class Access>
Key optional_double(std::string name, Access access) {
  return Key{std::move(name),
             [access](ExperimentConfig& c, const json& v) {
               if (v.is_null()) {
                 access(c).reset();
               } else {
                 access(c) = v.get<double>();
               }
             },
             [access](const ExperimentConfig& c) {
               const auto& o = access(const_cast<ExperimentConfig&>(c));
               return o ? json(*o) : json(nullptr);
             }};
}

template <class Access>
Key optional_size(std::string name, Access access) {
  return Key{std::move(name),
             [access](ExperimentConfig& c, const json& v) {
               if (v.is_null()) {
                 access(c).reset();
               } else {
                 access(c) = v.get<std::size_t>();
               }
             },
             [access](const ExperimentConfig& c) {
               const auto& o = access(const_cast<ExperimentConfig&>(c));
               return o ? json(*o) : json(nullptr);
             }};
}

template <class E, class Access, class Parse, class Print>
Key enum_field(std::string name, Access access, Parse parse, Print print) {
  return Key{std::move(name), [access, parse](ExperimentConfig& c, const json& v) { access(c) = parse(v.get<std::string>()); },
             [access, print](const ExperimentConfig& c) {
               return json(std::string(print(access(const_cast<ExperimentConfig&>(c)))));
             }};
}

void optimizer_keys(std::vector<Key>& keys, const std::string& prefix, OptimizerSpec& (*access)(ExperimentConfig&)) {
  keys.push_back(enum_field<OptimizerType>(
      prefix + ".type", [access](ExperimentConfig& c) -> OptimizerType& { return access(c).type; },
      optimizer_type_from_string, [](OptimizerType t) { return to_string(t); }));
  keys.push_back(field<double>(prefix + ".lr", [access](ExperimentConfig& c) -> double& { return access(c).lr; }));
  keys.push_back(
      field<double>(prefix + ".beta1", [access](ExperimentConfig& c) -> double& { return access(c).beta1; }));
  keys.push_back(
      field<double>(prefix + ".beta2", [access](ExperimentConfig& c) -> double& { return access(c).beta2; }));
  keys.push_back(
      field<double>(prefix + ".epsilon", [access](ExperimentConfig& c) -> double& { return access(c).epsilon; }));
  keys.push_back(optional_double(
      prefix + ".clip", [access](ExperimentConfig& c) -> std::optional<double>& { return access(c).clip; }));
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = [] {
    using C = ExperimentConfig;
    std::vector<Key> k;
    k.push_back(enum_field<TrainMode>(
        "mode", [](C& c) -> TrainMode& { return c.mode; }, train_mode_from_string,
        [](TrainMode m) { return to_string(m); }));
    k.push_back(field<std::uint64_t>("seed", [](C& c) -> std::uint64_t& { return c.seed; }));
    k.push_back(Key{"out_dir", [](C& c, const json& v) { c.out_dir = v.get<std::string>(); },
                    [](const C& c) { return json(c.out_dir.string()); }});

    k.push_back(field<std::string>("data.source", [](C& c) -> std::string& { return c.data.source; }));
    k.push_back(field<Shape>("data.image_shape", [](C& c) -> Shape& { return c.data.image_shape; }));
    k.push_back(field<std::string>("data.split", [](C& c) -> std::string& { return c.data.split; }));
    k.push_back(field<std::size_t>("data.limit", [](C& c) -> std::size_t& { return c.data.limit; }));
    k.push_back(field<bool>("data.drop_last", [](C& c) -> bool& { return c.data.drop_last; }));

    k.push_back(field<Shape>("arch.latent_shape", [](C& c) -> Shape& { return c.arch.latent_shape; }));
    k.push_back(enum_field<Topology>(
        "arch.topology", [](C& c) -> Topology& { return c.arch.topology; }, topology_from_string,
        [](Topology t) { return to_string(t); }));
    k.push_back(field<std::size_t>("arch.hat_width", [](C& c) -> std::size_t& { return c.arch.hat_width; }));
    k.push_back(field<std::size_t>("arch.hat_depth", [](C& c) -> std::size_t& { return c.arch.hat_depth; }));
    k.push_back(enum_field<Activation>(
        "arch.hat_activation", [](C& c) -> Activation& { return c.arch.hat_activation; }, activation_from_string,
        [](Activation a) { return to_string(a); }));
    k.push_back(field<std::size_t>("arch.gen_width", [](C& c) -> std::size_t& { return c.arch.gen_width; }));
    k.push_back(field<std::size_t>("arch.gen_depth", [](C& c) -> std::size_t& { return c.arch.gen_depth; }));
    k.push_back(enum_field<Activation>(
        "arch.gen_activation", [](C& c) -> Activation& { return c.arch.gen_activation; }, activation_from_string,
        [](Activation a) { return to_string(a); }));
    k.push_back(field<bool>("arch.gen_norm", [](C& c) -> bool& { return c.arch.gen_norm; }));

    k.push_back(field<std::size_t>("train.batch_size", [](C& c) -> std::size_t& { return c.train.batch_size; }));
    k.push_back(field<std::size_t>("train.steps", [](C& c) -> std::size_t& { return c.train.steps; }));
    k.push_back(field<double>("train.epsilon_data", [](C& c) -> double& { return c.train.epsilon_data; }));
    k.push_back(field<std::size_t>("train.bank_capacity", [](C& c) -> std::size_t& { return c.train.bank_capacity; }));
    k.push_back(field<double>("train.tau", [](C& c) -> double& { return c.train.tau; }));
    k.push_back(optional_size("train.anneal_step",
                              [](C& c) -> std::optional<std::size_t>& { return c.train.anneal.step; }));
    k.push_back(field<double>("train.anneal_factor", [](C& c) -> double& { return c.train.anneal.factor; }));
    k.push_back(enum_field<EnergyKind>(
        "train.energy", [](C& c) -> EnergyKind& { return c.train.energy; }, energy_kind_from_string,
        [](EnergyKind e) { return to_string(e); }));
    k.push_back(optional_double("train.prior_sigma",
                                [](C& c) -> std::optional<double>& { return c.train.prior_sigma; }));
    k.push_back(enum_field<PriorPlacement>(
        "train.prior_on", [](C& c) -> PriorPlacement& { return c.train.prior_on; }, prior_placement_from_string,
        [](PriorPlacement p) { return to_string(p); }));
    k.push_back(
        field<std::size_t>("train.inference_steps", [](C& c) -> std::size_t& { return c.train.inference_steps; }));
    k.push_back(field<double>("train.inference_eps", [](C& c) -> double& { return c.train.inference_eps; }));

    optimizer_keys(k, "hat_opt", [](C& c) -> OptimizerSpec& { return c.train.hat_optimizer; });
    optimizer_keys(k, "gen_opt", [](C& c) -> OptimizerSpec& { return c.train.gen_optimizer; });

    k.push_back(field<double>("langevin.eps_image", [](C& c) -> double& { return c.train.langevin.eps_image; }));
    k.push_back(field<double>("langevin.eps_latent", [](C& c) -> double& { return c.train.langevin.eps_latent; }));
    k.push_back(field<std::size_t>("langevin.steps", [](C& c) -> std::size_t& { return c.train.langevin.steps; }));
    k.push_back(field<double>("langevin.temperature", [](C& c) -> double& { return c.train.langevin.temperature; }));

    k.push_back(field<std::size_t>("run.checkpoint_every", [](C& c) -> std::size_t& { return c.run.checkpoint_every; }));
    k.push_back(field<std::size_t>("run.grid_every", [](C& c) -> std::size_t& { return c.run.grid_every; }));
    k.push_back(field<std::size_t>("run.grid_count", [](C& c) -> std::size_t& { return c.run.grid_count; }));
    k.push_back(
        field<std::string>("run.generator_checkpoint", [](C& c) -> std::string& { return c.run.generator_checkpoint; }));
    k.push_back(field<bool>("run.divergence_fatal", [](C& c) -> bool& { return c.run.divergence_fatal; }));
    k.push_back(field<double>("monitor.threshold", [](C& c) -> double& { return c.run.monitor.threshold; }));
    k.push_back(field<std::size_t>("monitor.window", [](C& c) -> std::size_t& { return c.run.monitor.window; }));

    k.push_back(field<std::size_t>("ae.epochs", [](C& c) -> std::size_t& { return c.autoencoder.epochs; }));
    k.push_back(field<std::size_t>("ae.batch_size", [](C& c) -> std::size_t& { return c.autoencoder.batch_size; }));
    k.push_back(field<double>("ae.lr", [](C& c) -> double& { return c.autoencoder.optimizer.lr; }));

    k.push_back(field<std::string>("sample.checkpoint", [](C& c) -> std::string& { return c.sample.checkpoint; }));
    k.push_back(field<std::size_t>("sample.count", [](C& c) -> std::size_t& { return c.sample.count; }));
    k.push_back(optional_size("sample.steps", [](C& c) -> std::optional<std::size_t>& { return c.sample.steps; }));

    k.push_back(field<std::string>("ood.checkpoint", [](C& c) -> std::string& { return c.ood.checkpoint; }));
    k.push_back(field<std::string>("ood.in_split", [](C& c) -> std::string& { return c.ood.in_split; }));
    k.push_back(field<std::vector<std::string>>("ood.datasets",
                                                [](C& c) -> std::vector<std::string>& { return c.ood.datasets; }));
    k.push_back(field<std::size_t>("ood.count", [](C& c) -> std::size_t& { return c.ood.count; }));

    k.push_back(field<std::string>("metrics.checkpoint", [](C& c) -> std::string& { return c.metrics.checkpoint; }));
    k.push_back(enum_field<ExtractorKind>(
        "metrics.extractor", [](C& c) -> ExtractorKind& { return c.metrics.extractor.kind; },
        extractor_kind_from_string, [](ExtractorKind e) { return to_string(e); }));
    k.push_back(field<std::uint64_t>("metrics.extractor_seed",
                                     [](C& c) -> std::uint64_t& { return c.metrics.extractor.seed; }));
    k.push_back(field<std::size_t>("metrics.extractor_channels",
                                   [](C& c) -> std::size_t& { return c.metrics.extractor.channels; }));
    k.push_back(Key{"metrics.encoder",
                    [](C& c, const json& v) { c.metrics.extractor.encoder_path = v.get<std::string>(); },
                    [](const C& c) { return json(c.metrics.extractor.encoder_path.string()); }});
    k.push_back(field<std::size_t>("metrics.samples", [](C& c) -> std::size_t& { return c.metrics.samples; }));
    k.push_back(field<std::string>("metrics.split", [](C& c) -> std::string& { return c.metrics.split; }));
    return k;
  }();
  return keys;
}

void sync(ExperimentConfig& c) {
  c.train.mode = c.mode;
  c.arch.image_shape = c.data.image_shape;
  c.data.batch_size = c.train.batch_size;
  c.data.seed = data_seed(c);
  c.autoencoder.seed = init_seed(c);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const Key& k : key_table()) names.push_back(k.name);
  return names;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  TrainMode mode = TrainMode::synthesis;
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw ConfigError("config key 'mode' must be a string");
    mode = train_mode_from_string(j.at("mode").get<std::string>());
  }
  ExperimentConfig c = preset(mode);
  const auto& table = key_table();
  for (const auto& [name, value] : j.items()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == name; });
    if (it == table.end()) throw ConfigError("unknown config key '" + name + "'");
    try {
      it->set(c, value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name + "': " + e.what());
    }
  }
  sync(c);
  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const Key& k : key_table()) j[k.name] = k.get(cfg);
  return j;
}

std::uint64_t data_seed(const ExperimentConfig& cfg) { return mix_seed(cfg.seed, 1); }
std::uint64_t init_seed(const ExperimentConfig& cfg) { return mix_seed(cfg.seed, 2); }
std::uint64_t train_seed(const ExperimentConfig& cfg) { return mix_seed(cfg.seed, 3); }
std::uint64_t sample_seed(const ExperimentConfig& cfg, std::uint64_t step) {
  return mix_seed(mix_seed(cfg.seed, 4), step);
}

}  // namespace hatebm
