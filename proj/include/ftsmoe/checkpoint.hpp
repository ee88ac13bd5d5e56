// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, all integers little-endian:
//
//   magic        8 bytes  "FTSMOECK"
//   version      u32      kCheckpointVersion
//   header_len   u64
//   header       JSON     {"config": {...}, "metadata": {...}}
//   n_tensors    u32
//   per tensor   u32 name_len, name, u32 ndim, u64 dims[ndim],
//                u8 dtype (1 = f64), payload (prod(dims) values)
//   checksum     u64      FNV-1a over every preceding byte
//
// Tensors appear in the canonical order of tensors(ModelParams). Payloads are
// stored as f64 so a reload reproduces forecasts bit for bit.
#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "ftsmoe/model.hpp"

namespace ftsmoe {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointVersionOffset = 8;

struct LoadedCheckpoint {
    Model model;
    nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws CorruptCheckpoint (bad magic, truncation, checksum or layout) or
/// VersionMismatch.
LoadedCheckpoint load_checkpoint_full(const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ftsmoe
