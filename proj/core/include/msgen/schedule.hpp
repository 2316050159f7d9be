// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msgen {

/// Ordered grid sizes S_1 < S_2 < ... < S_T of the coarse-to-fine pyramid.
class ScaleSchedule {
 public:
  /// Validates and adopts an explicit size list.
  explicit ScaleSchedule(std::vector<std::size_t> sizes);

  std::size_t count() const noexcept { return sizes_.size(); }
  std::size_t size(std::size_t t) const { return sizes_.at(t); }  // 0-based
  std::size_t final_size() const noexcept { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t tokens(std::size_t t) const { return size(t) * size(t); }
  std::size_t total_tokens() const noexcept;
  bool contains(std::size_t side) const noexcept;
  std::optional<std::size_t> index_of(std::size_t side) const noexcept;

  std::string to_string() const;
  friend bool operator==(const ScaleSchedule&, const ScaleSchedule&) = default;

 private:
  std::vector<std::size_t> sizes_;
};

/// Builds a schedule. An explicit list is validated and passed through;
/// otherwise S_t = ceil(t * final_size / count), bumped to keep the sequence
/// strictly increasing.
ScaleSchedule build_schedule(std::size_t count, std::size_t final_size,
                             std::optional<std::vector<std::size_t>> explicit_sizes = std::nullopt);

/// Parses "1,2,3,4" into sizes.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace msgen
