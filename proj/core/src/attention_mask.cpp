// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/attention_mask.hpp"

#include <string>

#include "msgen/errors.hpp"

namespace msgen {

std::string_view to_string(AttentionMode m) noexcept {
  return m == AttentionMode::kMarkov ? "markov" : "full-context";
}

AttentionMode parse_attention_mode(std::string_view s) {
  if (s == "markov") return AttentionMode::kMarkov;
  if (s == "full-context" || s == "full") return AttentionMode::kFullContext;
  throw ConfigError("unknown attention mode '" + std::string(s) + "' (expected markov or full-context)");
}

AttentionMask::AttentionMask(std::vector<std::size_t> block_sizes, AttentionMode mode)
    : mode_(mode), sizes_(std::move(block_sizes)) {
  offsets_.reserve(sizes_.size() + 1);
  offsets_.push_back(0);
  for (std::size_t b = 0; b < sizes_.size(); ++b) {
    if (sizes_[b] == 0) throw ShapeError("AttentionMask: empty block " + std::to_string(b));
    offsets_.push_back(offsets_.back() + sizes_[b]);
    block_of_.insert(block_of_.end(), sizes_[b], b);
  }
}

std::pair<std::size_t, std::size_t> AttentionMask::key_range(std::size_t query) const {
  const std::size_t b = block_of(query);
  const std::size_t first = mode_ == AttentionMode::kMarkov ? offsets_[b] : 0;
  return {first, offsets_[b + 1]};
}

bool AttentionMask::allowed(std::size_t query, std::size_t key) const {
  const auto [first, last] = key_range(query);
  return key >= first && key < last;
}

std::size_t AttentionMask::row_count(std::size_t query) const {
  const auto [first, last] = key_range(query);
  return last - first;
}

Tensor AttentionMask::dense() const {
  Tensor m = Tensor::matrix(size(), size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto [first, last] = key_range(i);
    for (std::size_t j = first; j < last; ++j) m(i, j) = 1.0;
  }
  return m;
}

std::vector<std::size_t> state_block_sizes(const ScaleSchedule& schedule) {
  std::vector<std::size_t> sizes{1};
  for (std::size_t t = 1; t < schedule.count(); ++t) sizes.push_back(schedule.tokens(t));
  return sizes;
}

AttentionMask markov_mask(const ScaleSchedule& schedule) {
  return AttentionMask(state_block_sizes(schedule), AttentionMode::kMarkov);
}

AttentionMask full_context_mask(const ScaleSchedule& schedule) {
  return AttentionMask(state_block_sizes(schedule), AttentionMode::kFullContext);
}

}  // namespace msgen
