// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "msgen/schedule.hpp"
#include "msgen/tensor.hpp"

namespace msgen {

enum class AttentionMode { kMarkov, kFullContext };

std::string_view to_string(AttentionMode m) noexcept;
AttentionMode parse_attention_mode(std::string_view s);

/// Token-level attention mask over a sequence of state blocks. In markov mode a
/// token sees exactly its own block; in full-context mode it sees its own block
/// and every earlier one. Both leave a contiguous key range per query.
class AttentionMask {
 public:
  AttentionMask(std::vector<std::size_t> block_sizes, AttentionMode mode);

  AttentionMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return block_of_.size(); }
  const std::vector<std::size_t>& block_sizes() const noexcept { return sizes_; }
  /// Offset of the first token of each block, plus a final entry equal to size().
  const std::vector<std::size_t>& block_offsets() const noexcept { return offsets_; }
  std::size_t block_of(std::size_t token) const { return block_of_.at(token); }

  /// Allowed keys for `query` as the half-open range [first, second).
  std::pair<std::size_t, std::size_t> key_range(std::size_t query) const;
  bool allowed(std::size_t query, std::size_t key) const;
  std::size_t row_count(std::size_t query) const;

  /// 0/1 matrix form, for inspection.
  Tensor dense() const;

 private:
  AttentionMode mode_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> block_of_;
};

/// Token counts of the states M_0 ... M_{T-1}: [1, S_2^2, ..., S_T^2].
std::vector<std::size_t> state_block_sizes(const ScaleSchedule& schedule);

AttentionMask markov_mask(const ScaleSchedule& schedule);
AttentionMask full_context_mask(const ScaleSchedule& schedule);

}  // namespace msgen
