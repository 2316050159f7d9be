// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "msgen/markov_state.hpp"
#include "msgen/quantizer.hpp"
#include "msgen/rng.hpp"
#include "msgen/transformer.hpp"

namespace msgen {

class VqTokenizer;

struct SampleOptions {
  double temperature = 1.0;  // 0 selects the argmax (lowest index on ties)
  std::optional<std::size_t> top_k;  // unset keeps the whole vocabulary
  std::uint64_t seed = 0;
  /// Keep every embedded scale and state even when the attention mode does
  /// not need them (required for overwrite_embedded in markov mode).
  bool retain_history = false;
  /// Called with (k, E_k) right after scale k is embedded, before it is
  /// pooled or assembled; k = 0 is the start token.
  std::function<void(std::size_t, Tensor&)> on_embedded;
  /// Receives each forward's hidden sequences and attention weights when set.
  std::vector<Tensor>* hidden_trace = nullptr;
};

struct SampleStats {
  std::size_t forward_calls = 0;
  std::size_t peak_live_tokens = 0;  // state tokens in the forward plus window tokens
};

/// Scale-by-scale generation state. In markov mode only the current state,
/// the window and f_hat are live.
class GenerationState {
 public:
  GenerationState(const Model& model, const Codebook& codebook, int label, const SampleOptions& opts = {});

  std::size_t scales_done() const noexcept { return done_; }
  bool finished() const noexcept { return done_ == model_->config().schedule.count(); }

  /// Logits [n_{t+1}, V] for the next scale from the current state (markov) or all states so far (full-context).
  Tensor next_logits();
  /// Accumulates the chosen indices into f_hat and, unless finished, builds the next state.
  void advance(std::span<const int> indices);

  const Tensor& f_hat() const noexcept { return f_hat_; }
  const SlidingWindow<Tensor>& window() const noexcept { return window_; }
  const Tensor& current_state() const { return states_.back(); }
  const std::vector<Tensor>& states() const noexcept { return states_; }
  /// Embedded scales kept so far (all of them when history is retained).
  const std::vector<Tensor>& embedded() const noexcept { return embedded_; }
  const SampleStats& stats() const noexcept { return stats_; }

  /// Replaces E_k and recomputes every retained earlier state built from it.
  /// The current state and the live window are left untouched. Requires retained history.
  void overwrite_embedded(std::size_t k, const Tensor& tokens);

 private:
  Tensor build_state(Graph& g, std::size_t t) const;

  const Model* model_;
  const Codebook* codebook_;
  int label_;
  SampleOptions opts_;
  bool keep_all_;
  std::size_t done_ = 0;
  Tensor f_hat_;
  SlidingWindow<Tensor> window_;
  std::vector<Tensor> embedded_;                 // indexed by k when keep_all_, else the latest only
  std::vector<std::vector<std::size_t>> windows_;  // retained window indices per state
  std::vector<Tensor> states_;                   // all states when keep_all_, else the current one
  SampleStats stats_;
};

/// Draws one index per logits row: temperature scaling, top-k filtering
/// (ties at the cut keep lower indices), then a categorical draw from `rng`.
std::vector<int> sample_indices(const Tensor& logits, double temperature, std::size_t top_k, Rng& rng);

struct SampleResult {
  ResidualPyramid pyramid;
  Tensor f_hat;
  std::optional<Tensor> image;  // decoded when a tokenizer is supplied
  SampleStats stats;
};

SampleResult generate(const Model& model, const Codebook& codebook, int label, const SampleOptions& opts = {},
                      const VqTokenizer* tokenizer = nullptr);

/// Independent samples; item i uses labels[i] and seeds[i] and equals the
/// corresponding single generate call.
std::vector<SampleResult> generate_batch(const Model& model, const Codebook& codebook, std::span<const int> labels,
                                         std::span<const std::uint64_t> seeds, const SampleOptions& opts = {},
                                         const VqTokenizer* tokenizer = nullptr);

}  // namespace msgen
