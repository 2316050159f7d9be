// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "msgen/errors.hpp"

namespace msgen {

ScaleSchedule::ScaleSchedule(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ConfigError("schedule must contain at least one scale");
  if (sizes_.front() == 0) throw ConfigError("schedule sizes must be positive");
  for (std::size_t i = 1; i < sizes_.size(); ++i) {
    if (sizes_[i] <= sizes_[i - 1]) {
      throw ConfigError("schedule " + to_string() + " is not strictly increasing at position " +
                        std::to_string(i + 1));
    }
  }
}

std::size_t ScaleSchedule::total_tokens() const noexcept {
  return std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0},
                         [](std::size_t acc, std::size_t s) { return acc + s * s; });
}

bool ScaleSchedule::contains(std::size_t side) const noexcept { return index_of(side).has_value(); }

std::optional<std::size_t> ScaleSchedule::index_of(std::size_t side) const noexcept {
  auto it = std::find(sizes_.begin(), sizes_.end(), side);
  if (it == sizes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - sizes_.begin());
}

std::string ScaleSchedule::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(sizes_[i]);
  }
  return out + "]";
}

ScaleSchedule build_schedule(std::size_t count, std::size_t final_size,
                             std::optional<std::vector<std::size_t>> explicit_sizes) {
  if (explicit_sizes) return ScaleSchedule(std::move(*explicit_sizes));
  if (count == 0) throw ConfigError("schedule needs at least one scale");
  if (count > final_size) {
    throw ConfigError("cannot fit " + std::to_string(count) + " strictly increasing scales below final size " +
                      std::to_string(final_size));
  }
  std::vector<std::size_t> sizes;
  sizes.reserve(count);
  for (std::size_t t = 1; t <= count; ++t) {
    std::size_t s = (t * final_size + count - 1) / count;
    if (!sizes.empty()) s = std::max(s, sizes.back() + 1);
    sizes.push_back(s);
  }
  return ScaleSchedule(std::move(sizes));
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t[]");
    const auto e = item.find_last_not_of(" \t[]");
    if (b == std::string::npos) continue;
    const std::string tok = item.substr(b, e - b + 1);
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || v <= 0) throw ConfigError("'" + tok + "' is not a positive integer in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace msgen
