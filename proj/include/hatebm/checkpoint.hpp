#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hatebm/nets.hpp"
#include "hatebm/trainer.hpp"

namespace hatebm {

// On-disk layout:
//   8 bytes  magic "HATEBMCK"
//   u32      format version
//   u64      header length L
//   L bytes  JSON header: {"meta": ..., "tensors": [{"name", "shape", "offset"}], "payload_hash"}
//   payload  little-endian doubles of every tensor, back to back
inline constexpr char kCheckpointMagic[9] = "HATEBMCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(std::string name, Tensor t);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);

// Stores a model under `prefix` (metadata in meta[prefix], tensors as
// "prefix/<param>").
void put_model(Checkpoint& ck, const std::string& prefix, const Model& model);
// Rebuilds the network from the stored architecture. Throws IoError when
// the recorded architecture hash disagrees with the stored config or the
// parameter layout, and when `expected` is given and differs.
Model get_model(const Checkpoint& ck, const std::string& prefix, const ArchConfig* expected = nullptr);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path, const ArchConfig* expected = nullptr);

// Complete training state, including optimizer moments, bank, random
// stream, data-stream position and metric log.
Checkpoint train_state_checkpoint(const TrainState& state, const TrainConfig& cfg);
void save_train_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg);
TrainState train_state_from_checkpoint(const Checkpoint& ck, const TrainConfig& cfg,
                                       const ArchConfig* expected = nullptr);
TrainState load_train_state(const std::filesystem::path& path, const TrainConfig& cfg,
                            const ArchConfig* expected = nullptr);

}  // namespace hatebm
