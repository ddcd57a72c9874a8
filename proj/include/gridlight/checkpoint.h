#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gridlight/tensor.h"

namespace gridlight::ad {

// Binary layout, little-endian:
//   "GLCKPT\0\1"  u32 version  u32 manifest_len  manifest bytes (key=value lines)
//   u32 record_count, then per record:
//     u32 name_len  name  u32 rank  u64 dims[rank]  f64 payload (row-major)
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::map<std::string, Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a temporary sibling and renames, so readers never see a partial file.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace gridlight::ad
