// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msgen/tensor.hpp"

namespace msgen {

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'G', 'E', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Contents of a checkpoint file.
///
/// Layout: 8-byte magic, u32 format version, u64 header length, a UTF-8 JSON
/// header with sorted keys, then the tensor payloads as little-endian doubles.
/// The header holds the config entries, metadata strings and a tensor
/// directory of names, shapes and byte offsets into the payload.
struct Checkpoint {
  std::string kind;                            // "model" or "tokenizer"
  std::uint64_t step = 0;
  std::string rng_state;
  std::map<std::string, std::string> config;   // flat config entries
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames it into place while holding
/// `<path>.lock`. Fails if the lock is already held.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace msgen
