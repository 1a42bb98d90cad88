#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "celeganser/models.hpp"

namespace celeganser::checkpoint {

namespace fs = std::filesystem;

inline constexpr std::uint16_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;
};

/// "CGSR" container: u16 version, u32 count, then per tensor u16 name length,
/// name, u8 dtype (0 = float32), u8 rank, u32 dims, little-endian data. The
/// remaining bytes are a key=value config echo.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> config;

  const NamedTensor* find(const std::string& name) const;
};

std::string encode(const Checkpoint& ckpt);
/// Throws kBadMagic for a foreign header and kCorruptFile for anything
/// truncated, duplicated or otherwise malformed.
Checkpoint decode(std::string_view bytes);

void save(const fs::path& path, const Checkpoint& ckpt);
Checkpoint load(const fs::path& path);

/// All state tensors in name order plus the network config echo merged with
/// `extra_config`.
Checkpoint to_checkpoint(const models::UNet<float>& net,
                         const std::map<std::string, std::string>& extra_config = {});
/// Copies every tensor of `net` from `ckpt`; names and shapes must match.
void load_state(models::UNet<float>& net, const Checkpoint& ckpt);
/// Network rebuilt from the config echo and loaded.
models::UNet<float> model_from_checkpoint(const Checkpoint& ckpt);

enum class InitMode { Scratch, Generic, UvReg };

std::string init_mode_name(InitMode mode);
InitMode parse_init_mode(const std::string& name);

struct TransferReport {
  int transferred = 0;
  int encoder_tensors = 0;  // "enc." tensors in the destination
  std::vector<std::string> skipped_shape_mismatch;
};

/// Scratch re-initializes `dst` (He-uniform from `seed`) and ignores `src`.
/// Pretrain modes re-initialize too, then copy every "enc." tensor whose name
/// and shape match. Throws kMissingCheckpoint when a pretrain mode gets no
/// source and kShapeMismatch when nothing matches.
TransferReport transfer_encoder(const Checkpoint* src, models::UNet<float>& dst, InitMode mode,
                                std::uint64_t seed);

}  // namespace celeganser::checkpoint
