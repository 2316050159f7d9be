// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msgen/attention_mask.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/schedule.hpp"

namespace msgen {

struct ModelConfig {
  std::size_t depth = 2;
  std::size_t width = 128;
  std::size_t heads = 2;
  double dropout = 0.0;
  std::size_t vocab = 64;
  std::size_t d_code = 32;
  std::size_t classes = 8;
  ScaleSchedule schedule{std::vector<std::size_t>{1, 2, 3, 4, 6, 8}};
  AttentionMode attention_mode = AttentionMode::kMarkov;
  std::size_t window = 3;
  bool history = true;
  bool kv_projection = false;
  bool class_every_scale = false;
  Interpolation kernel = Interpolation::kBilinear;
  /// When set, width, heads and dropout are derived from depth.
  bool paper_scaling = false;
  std::uint64_t seed = 0;

  /// width = 64 d, heads = d, dropout = 0.1 d / 24.
  void apply_paper_scaling();
  /// SwiGLU hidden size: 8w/3 rounded up to a multiple of 16.
  std::size_t mlp_hidden() const noexcept;
  std::size_t head_dim() const noexcept { return width / heads; }

  std::vector<std::string> issues() const;
  void validate() const;
};

}  // namespace msgen
