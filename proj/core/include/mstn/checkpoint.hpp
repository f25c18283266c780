#pragma once

// Versioned binary parameter container.
// Layout: "MSTN" | u32 version=1 | u64 meta-JSON length | meta JSON (UTF-8) |
// u32 tensor count | per tensor: u16 name length, name, 4x u32 shape, raw
// little-endian f32 values. All integers little-endian.

#include <cstdint>
#include <string>
#include <vector>

#include "mstn/tensor.hpp"

namespace mstn {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::string meta_json;
  std::vector<NamedTensor> tensors;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Writes the exact layout above; identical inputs produce identical bytes.
void save_checkpoint_file(const std::string& path, const CheckpointData& data);

/// Throws IoError with a structured reason (bad magic, version mismatch,
/// truncation, trailing bytes) instead of crashing on corrupt files.
CheckpointData load_checkpoint_file(const std::string& path);

}  // namespace mstn
