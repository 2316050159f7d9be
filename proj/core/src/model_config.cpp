// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/model_config.hpp"

#include "msgen/errors.hpp"

namespace msgen {

void ModelConfig::apply_paper_scaling() {
  width = 64 * depth;
  heads = depth;
  dropout = 0.1 * static_cast<double>(depth) / 24.0;
}

std::size_t ModelConfig::mlp_hidden() const noexcept {
  const std::size_t raw = (8 * width + 2) / 3;
  return (raw + 15) / 16 * 16;
}

std::vector<std::string> ModelConfig::issues() const {
  std::vector<std::string> out;
  if (depth == 0) out.push_back("model.depth must be positive");
  if (width == 0) out.push_back("model.width must be positive");
  if (heads == 0) {
    out.push_back("model.heads must be positive");
  } else if (width % heads != 0) {
    out.push_back("model.width " + std::to_string(width) + " is not divisible by model.heads " +
                  std::to_string(heads));
  } else if (head_dim() % 2 != 0) {
    out.push_back("head dimension " + std::to_string(head_dim()) + " must be even for rotary embeddings");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) out.push_back("model.dropout must lie in [0, 1)");
  if (vocab < 2) out.push_back("model.vocab must be at least 2");
  if (d_code == 0) out.push_back("model.d_code must be positive");
  if (classes == 0) out.push_back("model.classes must be positive");
  if (window == 0) out.push_back("model.window must be at least 1");
  if (schedule.size(0) != 1)
    out.push_back("schedule " + schedule.to_string() + " must start at 1: the start state is a single token");
  if (paper_scaling && (width != 64 * depth || heads != depth)) {
    out.push_back("paper_scaling is set but width/heads do not follow depth");
  }
  return out;
}

void ModelConfig::validate() const {
  if (auto v = issues(); !v.empty()) throw ConfigError(v);
}

}  // namespace msgen
