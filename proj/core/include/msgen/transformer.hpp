// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msgen/autograd.hpp"
#include "msgen/markov_state.hpp"
#include "msgen/model_config.hpp"
#include "msgen/ops.hpp"
#include "msgen/rng.hpp"

namespace msgen {

struct ForwardOptions {
  bool training = false;          // enables dropout
  Rng* rng = nullptr;             // dropout source, required when training with dropout > 0
  ops::AttentionProbe* probe = nullptr;  // receives post-softmax weights, layer-major then head
  std::vector<Tensor>* hidden = nullptr; // receives each block's output sequence
};

/// Pre-norm transformer (RMSNorm, rotary attention, SwiGLU MLP) over a
/// sequence of Markov states, plus the history-path parameters.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }
  const MarkovStateModule& history() const noexcept { return history_; }

  /// Logits for consecutive states beginning at schedule state `first`. Each
  /// state t must have the token count of the grid it predicts (S_{t+1}^2,
  /// with S_1^2 = 1 for the start state). Returns one [n, V] Var per state.
  std::vector<Var> forward(Graph& g, std::span<const Var> states, std::size_t first = 0,
                           const ForwardOptions& opts = {}) const;

  /// Token count of state t.
  std::size_t state_tokens(std::size_t t) const;

  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& tensors);

 private:
  struct Layer {
    std::size_t norm1, wq, wk, wv, wo, norm2, w_gate, w_up, w_down;
  };

  ModelConfig cfg_;
  ParameterStore params_;
  MarkovStateModule history_;
  std::vector<Layer> layers_;
  std::size_t final_norm_ = 0, head_w_ = 0, head_b_ = 0;
};

}  // namespace msgen
