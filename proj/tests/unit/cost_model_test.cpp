// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "msgen/cost_model.hpp"
#include "msgen/errors.hpp"

namespace msgen {
namespace {

using U64 = std::vector<std::uint64_t>;

ModelConfig cfg_d(std::size_t depth, std::size_t window = 3) {
  ModelConfig cfg;
  cfg.depth = depth;
  cfg.paper_scaling = true;
  cfg.apply_paper_scaling();
  cfg.window = window;
  return cfg;
}

ScaleSchedule linear_schedule(std::size_t count) {
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i <= count; ++i) sizes.push_back(i);
  return ScaleSchedule(sizes);
}

// ---------------------------------------------------------------------------
// Token counts

TEST(TokenCounts, SmallSchedule) {
  const TokenCounts tc = token_counts(ScaleSchedule({1, 2, 3}));
  EXPECT_EQ(tc.per_scale, (U64{1, 4, 9}));
  EXPECT_EQ(tc.cumulative, (U64{1, 5, 14}));
}

TEST(TokenCounts, SingleScale) {
  EXPECT_EQ(token_counts(ScaleSchedule({16})).per_scale, (U64{256}));
}

TEST(TokenCounts, CumulativeIsMonotone) {
  for (const auto& p : default_presets()) {
    const TokenCounts tc = token_counts(p.schedule);
    for (std::size_t t = 1; t < tc.cumulative.size(); ++t) EXPECT_GE(tc.cumulative[t], tc.cumulative[t - 1]);
    EXPECT_EQ(tc.cumulative.back(), p.schedule.total_tokens());
  }
}

// ---------------------------------------------------------------------------
// Attention pairs

TEST(AttentionPairs, FullContextHandValues) {
  const AttentionPairs p = attention_pairs(ScaleSchedule({1, 2}), AttentionMode::kFullContext, 1);
  EXPECT_EQ(p.self, (U64{1, 20}));
  EXPECT_EQ(p.pooling, (U64{0, 0}));
}

TEST(AttentionPairs, MarkovHandValues) {
  const AttentionPairs p = attention_pairs(ScaleSchedule({1, 2}), AttentionMode::kMarkov, 1);
  EXPECT_EQ(p.self, (U64{1, 16}));
  EXPECT_EQ(p.pooling, (U64{0, 1}));
}

TEST(AttentionPairs, WindowTokensFollowSlidingWindow) {
  const ScaleSchedule sch({1, 2, 3, 4});
  // Step t pools the N most recent states before it; state 0 is one token.
  EXPECT_EQ(window_tokens(sch, 0, 2), 0u);
  EXPECT_EQ(window_tokens(sch, 1, 2), 1u);
  EXPECT_EQ(window_tokens(sch, 2, 2), 1u + 4u);
  EXPECT_EQ(window_tokens(sch, 3, 2), 4u + 9u);
  EXPECT_EQ(window_tokens(sch, 3, 5), 1u + 4u + 9u);
}

TEST(AttentionPairs, MarkovNeverExceedsFullContext) {
  for (const auto& p : default_presets()) {
    const AttentionPairs m = attention_pairs(p.schedule, AttentionMode::kMarkov, 3);
    const AttentionPairs f = attention_pairs(p.schedule, AttentionMode::kFullContext, 3);
    for (std::size_t t = 0; t < m.self.size(); ++t) EXPECT_LE(m.self[t], f.self[t]) << p.name << " step " << t;
  }
}

double pair_ratio(const ScaleSchedule& sch) {
  const AttentionPairs m = attention_pairs(sch, AttentionMode::kMarkov, 3);
  const AttentionPairs f = attention_pairs(sch, AttentionMode::kFullContext, 3);
  double ms = 0.0, fs = 0.0;
  for (std::size_t t = 0; t < m.self.size(); ++t) {
    ms += static_cast<double>(m.self[t] + m.pooling[t]);
    fs += static_cast<double>(f.self[t]);
  }
  return ms / fs;
}

TEST(AttentionPairs, RatioVanishesOnLinearSchedules) {
  double prev = 1.0;
  for (std::size_t count : {4u, 8u, 16u, 32u, 64u, 128u}) {
    const double r = pair_ratio(linear_schedule(count));
    EXPECT_LT(r, prev) << count;
    prev = r;
  }
  EXPECT_LT(prev, 0.1);
}

TEST(AttentionPairs, RatioStaysBoundedOnDoublingSchedules) {
  // Doubling sides make each step dominate its prefix, so the ratio tends to 3/4.
  std::vector<std::size_t> sizes{1};
  for (int i = 0; i < 12; ++i) sizes.push_back(sizes.back() * 2);
  EXPECT_NEAR(pair_ratio(ScaleSchedule(sizes)), 0.75, 0.01);
}

// ---------------------------------------------------------------------------
// Memory estimate

TEST(MemoryEstimate, MarkovKvIsZero) {
  for (std::size_t depth : {2u, 16u, 24u}) {
    for (const auto& p : default_presets()) {
      const CostReport r = memory_estimate(cfg_d(depth), p.schedule, AttentionMode::kMarkov, 25, 2);
      for (double kv : r.kv_bytes) EXPECT_EQ(kv, 0.0);
    }
  }
}

TEST(MemoryEstimate, FullContextKvHandValue) {
  const ModelConfig cfg = cfg_d(2);  // w = 128
  const CostReport r = memory_estimate(cfg, ScaleSchedule({1, 2, 3}), AttentionMode::kFullContext, 3, 4);
  EXPECT_EQ(r.kv_bytes.back(), 2.0 * 2 * 128 * 3 * 14 * 4);
  EXPECT_EQ(r.kv_bytes[0], 2.0 * 2 * 128 * 3 * 1 * 4);
  EXPECT_EQ(r.activation_bytes.back(), kActivationConstant * 2 * 128 * 3 * 9 * 4);
  EXPECT_EQ(r.peak_step, 2u);
  EXPECT_EQ(r.peak_bytes, r.total_bytes.back());
}

TEST(MemoryEstimate, MarkovActivationHandValue) {
  const ModelConfig cfg = cfg_d(2, 1);
  const CostReport r = memory_estimate(cfg, ScaleSchedule({1, 2}), AttentionMode::kMarkov, 1, 2);
  EXPECT_EQ(r.live_tokens, (U64{1 + 0 + 1, 4 + 1 + 1}));
  EXPECT_EQ(r.activation_bytes[1], kActivationConstant * 2 * 128 * 4 * 2 + 128.0 * 2 * 2);
}

TEST(MemoryEstimate, FullContextKvProportionalToTotalTokens) {
  const ModelConfig cfg = cfg_d(4);
  const ScaleSchedule a({1, 2, 3}), b({1, 2, 3, 4, 5});
  const double ka = memory_estimate(cfg, a, AttentionMode::kFullContext, 1, 2).kv_bytes.back();
  const double kb = memory_estimate(cfg, b, AttentionMode::kFullContext, 1, 2).kv_bytes.back();
  EXPECT_DOUBLE_EQ(kb / ka, static_cast<double>(b.total_tokens()) / static_cast<double>(a.total_tokens()));
}

TEST(MemoryEstimate, LinearInBatchAndBytes) {
  const ModelConfig cfg = cfg_d(16);
  const ScaleSchedule sch = default_presets()[0].schedule;
  for (AttentionMode mode : {AttentionMode::kMarkov, AttentionMode::kFullContext}) {
    const CostReport base = memory_estimate(cfg, sch, mode, 5, 2);
    const CostReport batch2 = memory_estimate(cfg, sch, mode, 10, 2);
    const CostReport bytes2 = memory_estimate(cfg, sch, mode, 5, 4);
    for (std::size_t t = 0; t < sch.count(); ++t) {
      EXPECT_EQ(batch2.kv_bytes[t], 2.0 * base.kv_bytes[t]);
      EXPECT_EQ(batch2.activation_bytes[t], 2.0 * base.activation_bytes[t]);
      EXPECT_EQ(bytes2.total_bytes[t], 2.0 * base.total_bytes[t]);
    }
    EXPECT_EQ(batch2.peak_bytes, 2.0 * base.peak_bytes);
    EXPECT_EQ(bytes2.peak_bytes, 2.0 * base.peak_bytes);
  }
}

TEST(MemoryEstimate, MarkovStepsIgnoreEarlierScales) {
  // Steps beyond the window see the same live set, while full-context state keeps growing.
  const ModelConfig cfg = cfg_d(2, 1);
  const CostReport a = memory_estimate(cfg, ScaleSchedule({1, 2, 3, 4}), AttentionMode::kMarkov, 1, 2);
  const CostReport b = memory_estimate(cfg, ScaleSchedule({1, 3, 4}), AttentionMode::kMarkov, 1, 2);
  EXPECT_EQ(a.total_bytes.back(), b.total_bytes.back());
  EXPECT_EQ(a.peak_bytes, b.peak_bytes);
  const CostReport fa = memory_estimate(cfg, ScaleSchedule({1, 2, 3, 4}), AttentionMode::kFullContext, 1, 2);
  const CostReport fb = memory_estimate(cfg, ScaleSchedule({1, 3, 4}), AttentionMode::kFullContext, 1, 2);
  EXPECT_GT(fa.peak_bytes, fb.peak_bytes);
}

TEST(MemoryEstimate, AllFiguresNonNegative) {
  const CostReport r = memory_estimate(cfg_d(16), default_presets()[2].schedule, AttentionMode::kFullContext, 25, 2);
  for (std::size_t t = 0; t < r.sizes.size(); ++t) {
    EXPECT_GE(r.kv_bytes[t], 0.0);
    EXPECT_GT(r.activation_bytes[t], 0.0);
    EXPECT_GT(r.flops[t], 0.0);
  }
}

TEST(MemoryEstimate, ZeroBatchOrBytesRejected) {
  EXPECT_THROW(memory_estimate(cfg_d(2), ScaleSchedule({1, 2}), AttentionMode::kMarkov, 0, 2), ConfigError);
  EXPECT_THROW(memory_estimate(cfg_d(2), ScaleSchedule({1, 2}), AttentionMode::kMarkov, 1, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Comparison

TEST(Compare, RatioIncreasesWithResolution) {
  for (std::size_t depth : {16u, 20u, 24u}) {
    const Comparison cmp = compare(cfg_d(depth), default_presets(), 25, 2);
    ASSERT_EQ(cmp.rows.size(), 3u);
    EXPECT_TRUE(cmp.strictly_increasing) << depth;
    EXPECT_GT(cmp.rows[0].ratio, 1.0);
    EXPECT_GT(cmp.rows[2].ratio, cmp.rows[0].ratio);
  }
}

TEST(Compare, IdenticalPresetsAreNotIncreasing) {
  const ResolutionPreset p = default_presets()[0];
  const Comparison cmp = compare(cfg_d(16), {p, p}, 25, 2);
  EXPECT_EQ(cmp.rows[0].ratio, cmp.rows[1].ratio);
  EXPECT_FALSE(cmp.strictly_increasing);
}

TEST(Compare, SameModeRatioIsOne) {
  const ModelConfig cfg = cfg_d(16);
  const ScaleSchedule sch = default_presets()[1].schedule;
  const double a = memory_estimate(cfg, sch, AttentionMode::kMarkov, 25, 2).peak_bytes;
  const double b = memory_estimate(cfg, sch, AttentionMode::kMarkov, 25, 2).peak_bytes;
  EXPECT_EQ(a / b, 1.0);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Reports, CsvHeaderAndRows) {
  CostReport r = memory_estimate(cfg_d(2), ScaleSchedule({1, 2, 3}), AttentionMode::kMarkov, 1, 2);
  r.name = "tiny";
  std::ostringstream out;
  write_report_csv(out, {r});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "name,mode,step,size,tokens,cumulative_tokens,live_tokens,attention_pairs,pooling_pairs,kv_bytes,"
            "activation_bytes,total_bytes,flops");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind("tiny,markov,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Reports, ComparisonCsvHasOneRowPerPreset) {
  std::ostringstream out;
  write_comparison_csv(out, compare(cfg_d(16), default_presets(), 25, 2));
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("preset,image_side,final_size,steps,full_context_peak_bytes,markov_peak_bytes,ratio\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}

}  // namespace
}  // namespace msgen
