#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "hfgcn/model.hpp"
#include "hfgcn/training.hpp"

namespace hfgcn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct BnSnapshot {
  Tensor running_mean;
  Tensor running_var;
  bool initialized = false;
};

/// Everything needed to rebuild a model and, optionally, resume training.
struct Checkpoint {
  std::string model_config;  // key=value echo
  std::string train_config;  // key=value echo, may be empty
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::map<std::string, Tensor> params;
  std::map<std::string, BnSnapshot> batch_norms;
  std::map<std::string, Tensor> momentum;
};

Checkpoint capture_checkpoint(Model& model, const Trainer* trainer = nullptr);

// Layout, little-endian:
//   "HFGW1" | u32 version | str model_config | str train_config | u64 epoch |
//   str rng_state | u32 n, n x (str name, tensor) params |
//   u32 n, n x (str name, u8 initialized, tensor mean, tensor var) |
//   u32 n, n x (str name, tensor) momentum | u32 CRC-32 of all bytes after the magic
// with str = u32 length + bytes and tensor = u32 rank, rank x u64 extents, f64 values.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parses the stored model config.
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);

/// Copies parameters and BN statistics into a model built from the same
/// config. Names and shapes must match exactly.
void apply_checkpoint(Model& model, const Checkpoint& ckpt);
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

}  // namespace hfgcn
