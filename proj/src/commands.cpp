#include "hatebm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hatebm/checkpoint.hpp"
#include "hatebm/error.hpp"
#include "hatebm/eval.hpp"

namespace hatebm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kKeepCheckpoints = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write on " + path.string());
}

std::string step_name(const char* prefix, std::size_t step, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%07zu%s", prefix, step, ext);
  return buf;
}

// Square-ish grid with at least `count` tiles.
std::pair<std::size_t, std::size_t> grid_shape(std::size_t count) {
  std::size_t cols = 1;
  while (cols * cols < count) ++cols;
  const std::size_t rows = (count + cols - 1) / cols;
  return {rows, cols};
}

void prune_checkpoints(const fs::path& dir) {
  std::vector<fs::path> numbered;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt-", 0) == 0 && e.path().extension() == ".ckpt") numbered.push_back(e.path());
  }
  std::sort(numbered.begin(), numbered.end());
  while (numbered.size() > kKeepCheckpoints) {
    fs::remove(numbered.front());
    numbered.erase(numbered.begin());
  }
}

void save_checkpoint_pair(const fs::path& dir, const TrainState& state, const TrainConfig& cfg) {
  const Checkpoint ck = train_state_checkpoint(state, cfg);
  write_checkpoint(dir / step_name("ckpt", state.step, ".ckpt"), ck);
  write_checkpoint(dir / "latest.ckpt", ck);
  prune_checkpoints(dir);
}

void write_grid(const ExperimentConfig& cfg, const TrainState& state, const fs::path& path) {
  Rng rng(sample_seed(cfg, state.step));
  const ImageBatch x = draw_samples(state.hat, state.generator, cfg.train, cfg.run.grid_count, rng);
  const auto [rows, cols] = grid_shape(cfg.run.grid_count);
  sample_grid(x, rows, cols, path);
}

Model generator_for(const ExperimentConfig& cfg, Rng& init) {
  if (cfg.mode == TrainMode::synthesis) return build_generator(cfg.arch, init);
  if (cfg.run.generator_checkpoint.empty()) {
    throw ConfigError(std::string(to_string(cfg.mode)) + " training needs run.generator_checkpoint");
  }
  LoadedModels m = load_models(cfg.run.generator_checkpoint, &cfg.arch);
  if (!m.has_generator) throw ConfigError(cfg.run.generator_checkpoint + " holds no generator");
  return std::move(m.generator);
}

std::string require_checkpoint(const std::string& path, const char* key) {
  if (path.empty()) throw ConfigError(std::string("set ") + key + " (or pass --checkpoint)");
  if (!fs::exists(path)) throw IoError("checkpoint " + path + " does not exist");
  return path;
}

}  // namespace

LoadedModels load_models(const fs::path& checkpoint, const ArchConfig* expected) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  LoadedModels m;
  const std::string format = ck.meta.value("format", "");
  if (format == "train_state") {
    m.mode = train_mode_from_string(ck.meta.at("train").at("mode").get<std::string>());
    m.hat = get_model(ck, "hat", expected);
    m.generator = get_model(ck, "generator", expected);
    m.has_generator = true;
    return m;
  }
  if (format == "model") {
    Model model = get_model(ck, "model", expected);
    if (model.net->kind() == NetKind::hat) {
      m.hat = std::move(model);
    } else if (model.net->kind() == NetKind::generator) {
      m.generator = std::move(model);
      m.has_generator = true;
    } else {
      throw ConfigError(checkpoint.string() + " holds an inference network, not a hat or generator");
    }
    return m;
  }
  throw IoError(checkpoint.string() + ": unknown checkpoint format '" + format + "'");
}

std::string run_id(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config_to_json(cfg).dump());
  return os.str().substr(0, 12);
}

void freeze_config(const ExperimentConfig& cfg, const std::string& config_text) {
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "config.json", config_text);
  write_text(cfg.out_dir / "config.resolved.json", config_to_json(cfg).dump(2) + "\n");
}

std::vector<double> score_images(const Model& hat, const Tensor& images, std::size_t chunk) {
  std::vector<double> scores;
  scores.reserve(images.batch());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < images.batch(); start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, images.batch() - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const std::vector<double> e = hat_energy(images.gather(idx), hat);
    scores.insert(scores.end(), e.begin(), e.end());
  }
  return scores;
}

DatasetSpec dataset_ref(const DatasetSpec& base, const std::string& ref, const std::string& default_split) {
  DatasetSpec spec = base;
  const auto at = ref.rfind('@');
  spec.source = at == std::string::npos ? ref : ref.substr(0, at);
  spec.split = at == std::string::npos ? default_split : ref.substr(at + 1);
  if (spec.source.empty()) throw ConfigError("empty dataset reference '" + ref + "'");
  return spec;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& config_text, bool resume, std::ostream& log) {
  cfg.validate();
  const fs::path ckdir = cfg.out_dir / "checkpoints";
  const fs::path griddir = cfg.out_dir / "grids";
  const fs::path latest = ckdir / "latest.ckpt";
  if (resume) {
    if (!fs::exists(latest)) throw ConfigError("--resume: no checkpoint at " + latest.string());
  } else {
    if (fs::exists(latest)) {
      throw ConfigError(cfg.out_dir.string() + " already holds a run; pass --resume or choose another --out");
    }
    freeze_config(cfg, config_text);
    write_text(cfg.out_dir / "run_id", run_id(cfg) + "\n");
  }
  fs::create_directories(ckdir);
  fs::create_directories(griddir);

  std::size_t skipped = 0;
  BatchStream data = load_dataset(cfg.data, &skipped);
  log << "data: " << data.dataset_size() << " images from " << cfg.data.source;
  if (skipped) log << " (" << skipped << " undecodable files skipped)";
  log << "\n";

  TrainState state;
  if (resume) {
    state = load_train_state(latest, cfg.train, &cfg.arch);
    log << "resumed at step " << state.step << "\n";
  } else {
    Rng init(init_seed(cfg));
    Model hat = build_hat_network(cfg.arch, init);
    Model gen = generator_for(cfg, init);
    state = make_train_state(std::move(hat), std::move(gen), cfg.train, Rng(train_seed(cfg)));
    save_checkpoint_pair(ckdir, state, cfg.train);
  }

  const fs::path csv = cfg.out_dir / "metrics.csv";
  write_metric_log(csv, state.log);
  std::ofstream metrics(csv, std::ios::app);
  if (!metrics) throw IoError("cannot append to " + csv.string());

  GapReport gap = energy_gap_monitor(state.log, cfg.run.monitor);
  std::size_t run_length = 0;
  for (auto it = gap.gap.rbegin(); it != gap.gap.rend() && !(std::abs(*it) <= cfg.run.monitor.threshold); ++it) {
    ++run_length;
  }
  std::optional<std::size_t> flag_step = gap.flag_step;

  const StepHook hook = [&](const TrainState& s, const MetricRow& row) {
    metrics << format_metric_row(row) << '\n';
    metrics.flush();
    const double g = row.pos_energy - row.neg_energy;
    run_length = !(std::abs(g) <= cfg.run.monitor.threshold) ? run_length + 1 : 0;
    if (run_length >= cfg.run.monitor.window && !flag_step) {
      flag_step = row.step;
      log << "divergence flag at step " << row.step << " (|gap| > " << cfg.run.monitor.threshold << " for "
          << cfg.run.monitor.window << " steps)\n";
    }
    if (cfg.run.grid_every > 0 && s.step % cfg.run.grid_every == 0) {
      write_grid(cfg, s, griddir / step_name("grid", s.step, ".png"));
    }
    if (s.step % cfg.run.checkpoint_every == 0) save_checkpoint_pair(ckdir, s, cfg.train);
    if (s.step % 100 == 0 || s.step == cfg.train.steps) {
      log << "step " << s.step << " ebm_loss " << row.ebm_loss << " gen_loss " << row.gen_loss << "\n";
    }
    return !(flag_step && cfg.run.divergence_fatal);
  };

  try {
    train_loop(state, data, cfg.train, hook);
  } catch (const NumericError& e) {
    metrics.close();
    save_train_state(ckdir / "abort.ckpt", state, cfg.train);
    log << "numeric failure: " << e.what() << "\nlast good state saved to " << (ckdir / "abort.ckpt").string()
        << "\n";
    return kExitNumeric;
  }
  metrics.close();
  save_checkpoint_pair(ckdir, state, cfg.train);
  if (cfg.train.steps > 0 || !resume) write_grid(cfg, state, griddir / step_name("grid", state.step, ".png"));

  json summary = {{"run_id", run_id(cfg)},
                  {"mode", to_string(cfg.mode)},
                  {"steps", state.step},
                  {"diverged", flag_step.has_value()},
                  {"flag_step", flag_step ? json(*flag_step) : json(nullptr)}};
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  if (flag_step && cfg.run.divergence_fatal) return kExitDiverged;
  return kExitOk;
}

int cmd_sample(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log) {
  cfg.validate();
  const std::string path = require_checkpoint(cfg.sample.checkpoint, "sample.checkpoint");
  freeze_config(cfg, config_text);
  const LoadedModels m = load_models(path);
  if (!m.has_generator || !m.hat.net) throw ConfigError(path + " must hold both a hat network and a generator");
  TrainConfig tc = cfg.train;
  tc.mode = m.mode;
  Rng rng(sample_seed(cfg, 0));
  const ImageBatch x = draw_samples(m.hat, m.generator, tc, cfg.sample.count, rng, cfg.sample.steps);
  const auto [rows, cols] = grid_shape(cfg.sample.count);
  sample_grid(x, rows, cols, cfg.out_dir / "samples.png");
  Checkpoint dump;
  dump.meta["format"] = "samples";
  dump.meta["mode"] = to_string(m.mode);
  dump.put("samples", x);
  write_checkpoint(cfg.out_dir / "samples.ckpt", dump);
  log << "wrote " << cfg.sample.count << " samples (" << rows << "x" << cols << " grid) to " << cfg.out_dir.string()
      << "\n";
  return kExitOk;
}

int cmd_ood(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log) {
  cfg.validate();
  const std::string path = require_checkpoint(cfg.ood.checkpoint, "ood.checkpoint");
  if (cfg.ood.datasets.empty()) throw ConfigError("ood.datasets is empty");
  freeze_config(cfg, config_text);
  const LoadedModels m = load_models(path);
  if (!m.hat.net) throw ConfigError(path + " holds no hat network");

  DatasetSpec in_spec = cfg.data;
  in_spec.split = cfg.ood.in_split;
  in_spec.limit = cfg.ood.count;
  std::vector<ScoreSet> sets;
  sets.push_back(ScoreSet{score_images(m.hat, load_images(in_spec).images), "in-distribution"});

  std::ofstream table(cfg.out_dir / "ood.csv");
  if (!table) throw IoError("cannot write ood table");
  table << "dataset,auroc,n_in,n_out\n";
  table.precision(10);
  for (const std::string& ref : cfg.ood.datasets) {
    DatasetSpec spec = dataset_ref(cfg.data, ref, cfg.ood.in_split);
    spec.limit = cfg.ood.count;
    ScoreSet out{score_images(m.hat, load_images(spec).images), ref};
    const double auc = ood_auroc(sets.front(), out);
    table << ref << ',' << auc << ',' << sets.front().scores.size() << ',' << out.scores.size() << '\n';
    log << ref << ": AUROC " << auc << "\n";
    sets.push_back(std::move(out));
  }
  write_scores_csv(cfg.out_dir / "scores.csv", sets);
  return kExitOk;
}

int cmd_metrics(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log) {
  cfg.validate();
  const std::string path = require_checkpoint(cfg.metrics.checkpoint, "metrics.checkpoint");
  freeze_config(cfg, config_text);
  const LoadedModels m = load_models(path);
  if (!m.has_generator || !m.hat.net) throw ConfigError(path + " must hold both a hat network and a generator");

  DatasetSpec spec = cfg.data;
  spec.split = cfg.metrics.split;
  spec.limit = cfg.metrics.samples;
  const Tensor real = load_images(spec).images;
  TrainConfig tc = cfg.train;
  tc.mode = m.mode;
  Rng rng(sample_seed(cfg, 0));
  const ImageBatch fake = draw_samples(m.hat, m.generator, tc, cfg.metrics.samples, rng);

  const FeatureExtractor fx(cfg.metrics.extractor, real.sample_shape());
  const double fd = frechet_distance(feature_stats(real, fx), feature_stats(fake, fx));
  const json result = {{"frechet", fd},
                       {"extractor", to_string(cfg.metrics.extractor.kind)},
                       {"feature_dim", fx.dim()},
                       {"real", real.batch()},
                       {"generated", fake.batch()}};
  write_text(cfg.out_dir / "metrics.json", result.dump(2) + "\n");
  log << "frechet distance (" << to_string(cfg.metrics.extractor.kind) << ", k=" << fx.dim() << "): " << fd << "\n";
  return kExitOk;
}

int cmd_pretrain_ae(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log) {
  cfg.validate();
  freeze_config(cfg, config_text);
  const LoadedImages data = load_images(cfg.data);
  log << "autoencoder: " << data.images.batch() << " images, latent " << shape_string(cfg.arch.latent_shape)
      << "\n";
  std::ofstream losses(cfg.out_dir / "ae_loss.csv");
  losses << "epoch,mse\n";
  losses.precision(17);
  AutoencoderResult r;
  try {
    r = autoencoder_pretrain(data.images, cfg.arch, cfg.autoencoder, [&](std::size_t e, double loss) {
      losses << e << ',' << loss << '\n';
      log << "epoch " << e << " mse " << loss << "\n";
    });
  } catch (const NumericError& e) {
    log << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  save_model(cfg.out_dir / "inference.ckpt", r.inference);
  save_model(cfg.out_dir / "generator.ckpt", r.generator);

  const std::size_t n = std::min<std::size_t>(data.images.batch(), 32);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const ImageBatch x = data.images.gather(idx);
  const ImageBatch recon = r.generator(sphere_project(r.inference(x)));
  const auto [rows, cols] = grid_shape(n);
  sample_grid(x, rows, cols, cfg.out_dir / "inputs.png");
  sample_grid(recon, rows, cols, cfg.out_dir / "reconstructions.png");
  return kExitOk;
}

}  // namespace hatebm
