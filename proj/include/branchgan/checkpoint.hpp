#pragma once

// Checkpoint archive: "BGCK", u32 version, u64 manifest length, u32 manifest
// CRC32, the JSON manifest, then raw little-endian float32 tensor blobs. Each
// manifest tensor entry records name, shape, byte offset into the blob area,
// element count and CRC32.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "branchgan/networks.hpp"
#include "branchgan/optim.hpp"

namespace branchgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LossRecord {
  std::int64_t step = 0;
  int stage = 0;
  int phase = 0;
  double alpha = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  bool operator==(const LossRecord&) const = default;
};

/// Everything needed to continue training. Randomness is counter-based on
/// (seed, step), so the step counter stands in for a generator state.
struct TrainState {
  int stage = 1;
  int phase = 1;                // 1: Stage I (new block only), 2: Stage II
  std::int64_t step = 0;        // completed steps over the whole run
  std::int64_t stage_step = 0;  // completed steps inside the current stage
  std::uint64_t seed = 0;
  Adam g_opt;
  Adam d_opt;
  std::vector<LossRecord> history;
  bool operator==(const TrainState&) const = default;
};

struct Checkpoint {
  NetConfig config;
  int stage = 1;
  ParamSet generator;
  ParamSet discriminator;  // may be empty
  ParamSet encoder;        // may be empty
  std::optional<TrainState> train_state;
  nlohmann::json metadata = nlohmann::json::object();
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
/// Throws DataError on a bad signature, unsupported version, CRC mismatch or
/// truncated data.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: the file is written under a temporary name and renamed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Generator generator_from(const Checkpoint& ck);
Discriminator discriminator_from(const Checkpoint& ck);
Encoder encoder_from(const Checkpoint& ck);

}  // namespace branchgan
