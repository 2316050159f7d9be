// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "msgen/attention_mask.hpp"
#include "msgen/model_config.hpp"
#include "msgen/schedule.hpp"

namespace msgen {

/// Live per-layer buffers per token counted as activations: residual stream,
/// query, key, value, attention context and output projection. Attention
/// scores and the MLP hidden layer are excluded.
inline constexpr double kActivationConstant = 6.0;

struct TokenCounts {
  std::vector<std::uint64_t> per_scale;   // n_t = S_t^2
  std::vector<std::uint64_t> cumulative;  // sum over k <= t
};

TokenCounts token_counts(const ScaleSchedule& schedule);

/// Tokens held by the history window while predicting scale t (0-based):
/// the N most recent of E_0 .. E_{t-1}, with E_0 one token and E_k carrying n_{k+1}.
std::uint64_t window_tokens(const ScaleSchedule& schedule, std::size_t t, std::size_t window);

struct AttentionPairs {
  std::vector<std::uint64_t> self;     // query-key pairs inside the backbone per step
  std::vector<std::uint64_t> pooling;  // history query against window tokens (markov only)
};

/// Full-context step t: n_t * cumulative_t. Markov step t: n_t^2, plus one
/// pooling query per window token.
AttentionPairs attention_pairs(const ScaleSchedule& schedule, AttentionMode mode, std::size_t window);

struct CostReport {
  std::string name;  // free-form label carried into CSV output
  AttentionMode mode = AttentionMode::kMarkov;
  std::vector<std::size_t> sizes;
  TokenCounts tokens;
  AttentionPairs pairs;
  std::vector<std::uint64_t> live_tokens;  // tokens resident at each step
  std::vector<double> kv_bytes;
  std::vector<double> activation_bytes;
  std::vector<double> total_bytes;
  std::vector<double> flops;
  double peak_bytes = 0.0;
  std::size_t peak_step = 0;
  double total_flops = 0.0;
};

/// KV cache: 2 * depth * w * batch * cumulative_t * bytes (zero for markov).
/// Activations: c_act * depth * w * batch * n_t * bytes; markov adds the
/// history buffer w * batch * (window tokens + 1) * bytes. Peak is the max over steps.
CostReport memory_estimate(const ModelConfig& cfg, const ScaleSchedule& schedule, AttentionMode mode,
                           std::size_t batch, std::size_t bytes_per_elem);

struct ResolutionPreset {
  std::string name;
  std::size_t image_side = 0;
  ScaleSchedule schedule;
};

/// 256/512/1024 pixel images with 16/32/64 latents over 10/13/16 scales.
std::vector<ResolutionPreset> default_presets();

struct ComparisonRow {
  std::string name;
  std::size_t image_side = 0;
  ScaleSchedule schedule;
  double full_peak_bytes = 0.0;
  double markov_peak_bytes = 0.0;
  double ratio = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  bool strictly_increasing = false;
};

Comparison compare(const ModelConfig& cfg, const std::vector<ResolutionPreset>& presets, std::size_t batch = 25,
                   std::size_t bytes_per_elem = 2);

void write_report_csv(std::ostream& out, const std::vector<CostReport>& reports);
void write_comparison_csv(std::ostream& out, const Comparison& cmp);
void write_report_text(std::ostream& out, const CostReport& report);
void write_comparison_text(std::ostream& out, const Comparison& cmp);

}  // namespace msgen
