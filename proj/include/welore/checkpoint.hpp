// Copyright 2026 The WeLore Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "welore/model.hpp"

namespace welore {

/// Binary checkpoint layout (all integers little-endian):
///
///   "WLR1" | version u32 | metadata_len u64 | metadata (UTF-8 JSON) | payload
///
/// The payload concatenates every tensor as row-major 32-bit floats in
/// metadata order; a factored projection stores A then B. The metadata
/// carries the model config, one record per tensor and a CRC32 of the
/// payload.
inline constexpr char kCheckpointMagic[4] = {'W', 'L', 'R', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadResult {
  Model model;
  bool checksum_ok = true;
  std::string warning;  // non-empty on checksum mismatch
};

/// Serializes at 32-bit precision. Throws kInvalidArgument if any projection
/// still carries an adapter (fold it first, see fold_adapters).
std::vector<std::uint8_t> save(const Model& model);

/// Throws kBadMagic, kVersionMismatch, kTruncated or kShapeInconsistent. A
/// CRC mismatch is reported through LoadResult, not thrown.
LoadResult load(std::span<const std::uint8_t> bytes);

void save_file(const Model& model, const std::filesystem::path& path);
LoadResult load_file(const std::filesystem::path& path);

/// Rounds every tensor to 32-bit storage precision.
Model rounded_to_storage(const Model& model);

/// Merges adapters into the base weight: dense w += s u v; factored
/// [a | s u] [b ; v].
Model fold_adapters(const Model& model);

/// Total element count implied by a checkpoint's tensors.
std::size_t stored_element_count(const Model& model);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace welore
