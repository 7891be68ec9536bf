// Versioned binary checkpoints.
//
//   "VFCK" | u32 version | u8 kind | u32 len + config JSON |
//   u32 tensor count | per tensor: u32 len + name, u32 ndims, u32 dims...,
//   f32 data (row-major) | 32-byte SHA-256 of everything before it
#ifndef VF_CHECKPOINT_H_
#define VF_CHECKPOINT_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vf/embedder.h"
#include "vf/optim.h"
#include "vf/voice_filter.h"

namespace vf {

inline constexpr std::uint32_t kCheckpointVersion = 2;

enum class CheckpointKind : std::uint8_t { kVoiceFilter = 1, kEmbedder = 2 };

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kVoiceFilter;
  nlohmann::json config;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
// Throws DataError: "unsupported checkpoint version" for other versions,
// "corrupt checkpoint" when the trailing hash does not verify.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// `meta` is stored under config["meta"].
Checkpoint pack_voice_filter(const VoiceFilterModel& model, const AdamState* optimizer, const nlohmann::json& meta);
VoiceFilterModel unpack_voice_filter(const Checkpoint& c, AdamState* optimizer = nullptr);

Checkpoint pack_embedder(const EmbedderModel& model, const nlohmann::json& meta);
EmbedderModel unpack_embedder(const Checkpoint& c);

}  // namespace vf

#endif  // VF_CHECKPOINT_H_
