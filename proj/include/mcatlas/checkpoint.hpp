#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mcatlas/errors.hpp"
#include "mcatlas/training.hpp"

namespace mca {

inline constexpr std::uint16_t kCheckpointMajor = 1;
inline constexpr std::uint16_t kCheckpointMinor = 0;

// Unreadable, truncated, corrupted or incompatible checkpoint.
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

struct Checkpoint {
  std::uint16_t version_major = kCheckpointMajor;
  std::uint16_t version_minor = kCheckpointMinor;
  TrainConfig config;  // carries the architecture
  ad::ParameterSet parameters;
  OptimState optimizer;
  std::int64_t iteration = 0;
  std::string rng_state;  // textual engine state

  AtlasModel model() const { return AtlasModel(config.architecture, parameters); }
  Rng rng() const;
};

Checkpoint make_checkpoint(const TrainingSnapshot& snapshot);

// Layout: "MCATLAS\0", u16 major, u16 minor, u64 header size, JSON header,
// little-endian f32 blocks (parameters, then Adam first and second moments,
// in header order), u32 CRC-32 of the blocks.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mca
