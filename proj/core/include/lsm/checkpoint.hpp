#pragma once

#include "lsm/model.hpp"

#include <filesystem>
#include <string>

namespace lsm {

/// Checkpoint container:
///
///   "LSMCKPT\0"            8-byte magic
///   u32 LE                 format version (1)
///   u64 LE                 header length in bytes
///   header                 JSON: {"version", "config", "arrays": [{name, shape,
///                          dtype: "f32", offset, nbytes}], "data_bytes", "meta"}
///   data                   raw little-endian float32 arrays in manifest order
///
/// Parameters and floating-point buffers (BatchNorm statistics) are stored.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Detector& model, const std::filesystem::path& path,
                     const std::string& meta_json = "{}");

/// Throws Error(corrupt-checkpoint) on a bad magic, unreadable header or short
/// file, and Error(checkpoint-mismatch) on version or array shape mismatch.
Detector load_checkpoint(const std::filesystem::path& path);

/// The "meta" object stored alongside the arrays, serialized as JSON.
std::string read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace lsm
