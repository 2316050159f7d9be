// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/cost_model.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "msgen/errors.hpp"

namespace msgen {

TokenCounts token_counts(const ScaleSchedule& schedule) {
  TokenCounts out;
  std::uint64_t acc = 0;
  for (std::size_t s : schedule.sizes()) {
    const std::uint64_t n = static_cast<std::uint64_t>(s) * s;
    acc += n;
    out.per_scale.push_back(n);
    out.cumulative.push_back(acc);
  }
  return out;
}

std::uint64_t window_tokens(const ScaleSchedule& schedule, std::size_t t, std::size_t window) {
  // State t pools E_k for k in [max(0, t - N), t - 1].
  std::uint64_t n = 0;
  const std::size_t lo = t > window ? t - window : 0;
  for (std::size_t k = lo; k < t; ++k) n += k == 0 ? 1 : schedule.tokens(k);
  return n;
}

AttentionPairs attention_pairs(const ScaleSchedule& schedule, AttentionMode mode, std::size_t window) {
  const TokenCounts tc = token_counts(schedule);
  AttentionPairs out;
  for (std::size_t t = 0; t < schedule.count(); ++t) {
    const std::uint64_t n = tc.per_scale[t];
    if (mode == AttentionMode::kFullContext) {
      out.self.push_back(n * tc.cumulative[t]);
      out.pooling.push_back(0);
    } else {
      out.self.push_back(n * n);
      out.pooling.push_back(window_tokens(schedule, t, window));
    }
  }
  return out;
}

CostReport memory_estimate(const ModelConfig& cfg, const ScaleSchedule& schedule, AttentionMode mode,
                           std::size_t batch, std::size_t bytes_per_elem) {
  if (batch == 0 || bytes_per_elem == 0) throw ConfigError("batch and bytes per element must be positive");
  CostReport r;
  r.mode = mode;
  r.sizes = schedule.sizes();
  r.tokens = token_counts(schedule);
  r.pairs = attention_pairs(schedule, mode, cfg.window);
  const double D = static_cast<double>(cfg.depth), w = static_cast<double>(cfg.width);
  const double B = static_cast<double>(batch), bytes = static_cast<double>(bytes_per_elem);
  const double hid = static_cast<double>(cfg.mlp_hidden());
  for (std::size_t t = 0; t < schedule.count(); ++t) {
    const double n = static_cast<double>(r.tokens.per_scale[t]);
    const double cum = static_cast<double>(r.tokens.cumulative[t]);
    const std::uint64_t win = mode == AttentionMode::kMarkov ? r.pairs.pooling[t] : 0;
    double kv = 0.0;
    double act = kActivationConstant * D * w * B * n * bytes;
    if (mode == AttentionMode::kFullContext) {
      kv = 2.0 * D * w * B * cum * bytes;
      r.live_tokens.push_back(r.tokens.cumulative[t]);
    } else {
      act += w * B * (static_cast<double>(win) + 1.0) * bytes;
      r.live_tokens.push_back(r.tokens.per_scale[t] + win + 1);
    }
    r.kv_bytes.push_back(kv);
    r.activation_bytes.push_back(act);
    r.total_bytes.push_back(kv + act);
    if (kv + act > r.peak_bytes) {
      r.peak_bytes = kv + act;
      r.peak_step = t;
    }
    // Dense projections and MLP per token, then QK^T and PV per pair.
    const double dense = n * (8.0 * w * w + 6.0 * w * hid);
    const double attn = 4.0 * w * static_cast<double>(r.pairs.self[t]);
    const double pool = 4.0 * w * static_cast<double>(r.pairs.pooling[t]);
    r.flops.push_back(B * (D * (dense + attn) + pool));
    r.total_flops += r.flops.back();
  }
  return r;
}

std::vector<ResolutionPreset> default_presets() {
  return {{"256", 256, build_schedule(10, 16)}, {"512", 512, build_schedule(13, 32)},
          {"1024", 1024, build_schedule(16, 64)}};
}

Comparison compare(const ModelConfig& cfg, const std::vector<ResolutionPreset>& presets, std::size_t batch,
                   std::size_t bytes_per_elem) {
  Comparison out;
  for (const auto& p : presets) {
    ComparisonRow row{p.name, p.image_side, p.schedule, 0.0, 0.0, 0.0};
    row.full_peak_bytes = memory_estimate(cfg, p.schedule, AttentionMode::kFullContext, batch, bytes_per_elem).peak_bytes;
    row.markov_peak_bytes = memory_estimate(cfg, p.schedule, AttentionMode::kMarkov, batch, bytes_per_elem).peak_bytes;
    row.ratio = row.full_peak_bytes / row.markov_peak_bytes;
    out.rows.push_back(std::move(row));
  }
  out.strictly_increasing = !out.rows.empty();
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    if (!(out.rows[i].ratio > out.rows[i - 1].ratio)) out.strictly_increasing = false;
  }
  return out;
}

void write_report_csv(std::ostream& out, const std::vector<CostReport>& reports) {
  out << "name,mode,step,size,tokens,cumulative_tokens,live_tokens,attention_pairs,pooling_pairs,kv_bytes,"
         "activation_bytes,total_bytes,flops\n";
  out << std::setprecision(17);
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < r.sizes.size(); ++t) {
      out << r.name << ',' << to_string(r.mode) << ',' << t + 1 << ',' << r.sizes[t] << ',' << r.tokens.per_scale[t] << ','
          << r.tokens.cumulative[t] << ',' << r.live_tokens[t] << ',' << r.pairs.self[t] << ',' << r.pairs.pooling[t]
          << ',' << r.kv_bytes[t] << ',' << r.activation_bytes[t] << ',' << r.total_bytes[t] << ',' << r.flops[t]
          << '\n';
    }
  }
}

void write_comparison_csv(std::ostream& out, const Comparison& cmp) {
  out << "preset,image_side,final_size,steps,full_context_peak_bytes,markov_peak_bytes,ratio\n";
  out << std::setprecision(17);
  for (const auto& r : cmp.rows) {
    out << r.name << ',' << r.image_side << ',' << r.schedule.final_size() << ',' << r.schedule.count() << ','
        << r.full_peak_bytes << ',' << r.markov_peak_bytes << ',' << r.ratio << '\n';
  }
}

namespace {

std::string gib(double bytes) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << bytes / (1024.0 * 1024.0 * 1024.0) << " GiB";
  return s.str();
}

}  // namespace

void write_report_text(std::ostream& out, const CostReport& r) {
  out << "mode " << to_string(r.mode) << ", " << r.sizes.size() << " scales\n";
  out << std::setw(5) << "step" << std::setw(6) << "size" << std::setw(10) << "tokens" << std::setw(12) << "live"
      << std::setw(16) << "pairs" << std::setw(14) << "kv" << std::setw(14) << "activations" << '\n';
  for (std::size_t t = 0; t < r.sizes.size(); ++t) {
    out << std::setw(5) << t + 1 << std::setw(6) << r.sizes[t] << std::setw(10) << r.tokens.per_scale[t]
        << std::setw(12) << r.live_tokens[t] << std::setw(16) << r.pairs.self[t] + r.pairs.pooling[t] << std::setw(14)
        << gib(r.kv_bytes[t]) << std::setw(14) << gib(r.activation_bytes[t]) << '\n';
  }
  out << "peak " << gib(r.peak_bytes) << " at step " << r.peak_step + 1 << ", " << std::scientific
      << std::setprecision(3) << r.total_flops << " FLOPs\n"
      << std::defaultfloat;
}

void write_comparison_text(std::ostream& out, const Comparison& cmp) {
  out << std::setw(8) << "preset" << std::setw(8) << "S_T" << std::setw(7) << "T" << std::setw(16) << "full-context"
      << std::setw(14) << "markov" << std::setw(9) << "ratio" << '\n';
  for (const auto& r : cmp.rows) {
    out << std::setw(8) << r.name << std::setw(8) << r.schedule.final_size() << std::setw(7) << r.schedule.count()
        << std::setw(16) << gib(r.full_peak_bytes) << std::setw(14) << gib(r.markov_peak_bytes) << std::setw(9)
        << std::fixed << std::setprecision(2) << r.ratio << std::defaultfloat << '\n';
  }
  out << "ratio strictly increasing: " << (cmp.strictly_increasing ? "yes" : "no") << '\n';
}

}  // namespace msgen
