#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rankft {

// Versioned binary checkpoint:
//
//   magic "RKFTCKPT" | u32 version | u32 len + config JSON |
//   64 hex chars SHA-256 of the config JSON | u32 vocab size,
//   (u32 len + bytes) per token | u64 count + little-endian f64 params
//
// The config JSON carries a "kind" member used to pick the model class.
struct CheckpointBlob {
  static constexpr std::uint32_t kVersion = 1;
  std::string config_json;
  std::vector<std::string> vocabulary;
  std::vector<double> parameters;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointBlob& blob);
// Throws ParseError on bad magic, version or a config hash mismatch.
CheckpointBlob read_checkpoint(const std::filesystem::path& path);

}  // namespace rankft
