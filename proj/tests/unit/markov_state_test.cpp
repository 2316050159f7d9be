// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <deque>

#include "msgen/errors.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/markov_state.hpp"
#include "msgen/ops.hpp"
#include "test_support.hpp"

namespace msgen {
namespace {

using testing::random_tensor;

Tensor tagged(double tag, std::size_t rows = 1, std::size_t cols = 2) { return Tensor::matrix(rows, cols, tag); }

std::vector<double> tags(const SlidingWindow<Tensor>& w) {
  std::vector<double> out;
  for (const Tensor& t : w.items()) out.push_back(t[0]);
  return out;
}

TEST(SlidingWindow, CapacityOneKeepsLatest) {
  SlidingWindow<Tensor> w(1, 2);
  w.push(tagged(1));
  w.push(tagged(2));
  EXPECT_EQ(tags(w), std::vector<double>{2});
}

TEST(SlidingWindow, EvictsOldestFirst) {
  SlidingWindow<Tensor> w(3, 2);
  for (double t : {1.0, 2.0, 3.0, 4.0}) w.push(tagged(t));
  EXPECT_EQ(tags(w), (std::vector<double>{2, 3, 4}));
}

TEST(SlidingWindow, PushIntoEmpty) {
  SlidingWindow<Tensor> w(2, 2);
  EXPECT_TRUE(w.empty());
  w.push(tagged(7, 3));
  EXPECT_EQ(tags(w), std::vector<double>{7});
  EXPECT_EQ(w.token_count(), 3u);
}

TEST(SlidingWindow, RejectsBadInput) {
  EXPECT_THROW(SlidingWindow<Tensor>(0, 2), ConfigError);
  SlidingWindow<Tensor> w(2, 2);
  EXPECT_THROW(w.push(tagged(1, 1, 3)), ShapeError);
}

TEST(SlidingWindow, MatchesReferenceQueue) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t capacity = 1 + rng.below(5);
    SlidingWindow<Tensor> w(capacity, 2);
    std::deque<double> ref;
    for (int step = 0; step < 40; ++step) {
      const double tag = static_cast<double>(step);
      w.push(tagged(tag, 1 + rng.below(4)));
      ref.push_back(tag);
      if (ref.size() > capacity) ref.pop_front();
      ASSERT_EQ(tags(w), std::vector<double>(ref.begin(), ref.end())) << "seed " << seed << " step " << step;
      ASSERT_LE(w.size(), capacity);
    }
  }
}

// ---------------------------------------------------------------------------
// History pooling

Tensor pool(const Tensor& q, const std::vector<Tensor>& items) {
  Graph g(false);
  std::vector<Var> window;
  for (const Tensor& t : items) window.push_back(g.constant(t));
  return pool_history(g, g.constant(q), window).value();
}

TEST(PoolHistory, UniformWindowGivesCommonToken) {
  Rng rng(1);
  const Tensor u = random_tensor(rng, 1, 6);
  Tensor many = Tensor::matrix(5, 6);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) many(r, c) = u(0, c);
  const Tensor h = pool(random_tensor(rng, 1, 6), {many, Tensor(Shape{1, 6}, std::vector<double>(u.values().begin(), u.values().end()))});
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(h(0, c), u(0, c), 1e-12);
}

TEST(PoolHistory, SingleTokenIsExact) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, 1, 6);
  EXPECT_EQ(pool(random_tensor(rng, 1, 6), {x}), x);
}

TEST(PoolHistory, EqualLogitsAverage) {
  // q = (1, 0); x1 and x2 share the first coordinate, so q.x1 = q.x2.
  const Tensor q = Tensor::matrix({{1.0, 0.0}});
  const Tensor x = Tensor::matrix({{0.5, 2.0}, {0.5, -1.0}});
  const Tensor h = pool(q, {x});
  EXPECT_NEAR(h(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(h(0, 1), 0.5, 1e-12);
}

TEST(PoolHistory, EmptyWindowGivesZero) {
  const Tensor h = pool(Tensor::matrix({{1.0, 2.0, 3.0}}), {});
  EXPECT_EQ(h, Tensor::matrix(1, 3));
}

TEST(PoolHistory, IsConvexCombination) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(5000 + seed);
    const std::size_t d = 1 + rng.below(6);
    std::vector<Tensor> items(1 + rng.below(4));
    for (Tensor& t : items) t = random_tensor(rng, 1 + rng.below(5), d, 3.0);
    const Tensor h = pool(random_tensor(rng, 1, d, 3.0), items);
    for (std::size_t c = 0; c < d; ++c) {
      double lo = items[0](0, c), hi = lo;
      for (const Tensor& t : items)
        for (std::size_t r = 0; r < t.rows(); ++r) {
          lo = std::min(lo, t(r, c));
          hi = std::max(hi, t(r, c));
        }
      ASSERT_GE(h(0, c), lo - 1e-12) << "seed " << seed;
      ASSERT_LE(h(0, c), hi + 1e-12) << "seed " << seed;
    }
  }
}

TEST(PoolHistory, EvictedItemsDoNotMatter) {
  Rng rng(3);
  const Tensor q = random_tensor(rng, 1, 4);
  std::vector<Tensor> seq;
  for (int i = 0; i < 5; ++i) seq.push_back(random_tensor(rng, 1 + i, 4));
  auto run = [&](const std::vector<Tensor>& items) {
    SlidingWindow<Tensor> w(3, 4);
    for (const Tensor& t : items) w.push(t);
    return pool(q, w.snapshot());
  };
  const Tensor base = run(seq);
  std::vector<Tensor> changed = seq;
  changed[0] = random_tensor(rng, 1, 4, 100.0);
  changed[1] = random_tensor(rng, 2, 4, 100.0);
  EXPECT_EQ(run(changed), base);
}

TEST(PoolHistory, RejectsWidthMismatch) {
  Graph g(false);
  std::vector<Var> window{g.constant(Tensor::matrix(2, 3))};
  EXPECT_THROW(pool_history(g, g.constant(Tensor::matrix(1, 4)), window), ShapeError);
}

// ---------------------------------------------------------------------------
// State assembly

Tensor assemble(const Tensor& e, const Tensor& h, const Tensor& proj) {
  Graph g(false);
  return assemble_state(g.constant(e), g.constant(h), g.constant(proj)).value();
}

Tensor identity_left(std::size_t d, double left, double right) {
  Tensor p = Tensor::matrix(d, 2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    p(i, i) = left;
    p(i, d + i) = right;
  }
  return p;
}

TEST(AssembleState, ZeroHistoryWithIdentityKeepsTokens) {
  Rng rng(4);
  const Tensor e = random_tensor(rng, 4, 3);
  EXPECT_EQ(assemble(e, Tensor::matrix(1, 3), identity_left(3, 1.0, 0.0)), e);
}

TEST(AssembleState, BroadcastRowsEqualHistory) {
  Rng rng(5);
  const Tensor h = random_tensor(rng, 1, 3);
  const Tensor out = assemble(Tensor::matrix(5, 3), h, identity_left(3, 0.0, 1.0));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(r, c), h(0, c));
}

TEST(AssembleState, AveragingHalvesRecoverToken) {
  Rng rng(6);
  const Tensor e = random_tensor(rng, 1, 4);
  const Tensor out = assemble(e, e, identity_left(4, 0.5, 0.5));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out(0, c), e(0, c), 1e-12);
}

TEST(AssembleState, IsLinear) {
  Rng rng(7);
  const Tensor proj = random_tensor(rng, 3, 6);
  const Tensor e1 = random_tensor(rng, 4, 3), e2 = random_tensor(rng, 4, 3);
  const Tensor h1 = random_tensor(rng, 1, 3), h2 = random_tensor(rng, 1, 3);
  const double a = 0.7, b = -1.3;
  Tensor e = e1, h = h1;
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = a * e1[i] + b * e2[i];
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = a * h1[i] + b * h2[i];
  const Tensor lhs = assemble(e, h, proj);
  const Tensor y1 = assemble(e1, h1, proj), y2 = assemble(e2, h2, proj);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * y1[i] + b * y2[i], 1e-12);
}

TEST(AssembleState, RejectsDimensionMismatch) {
  EXPECT_THROW(assemble(Tensor::matrix(2, 3), Tensor::matrix(1, 4), identity_left(3, 1.0, 0.0)), ShapeError);
}

// ---------------------------------------------------------------------------
// Scale embedding

Tensor embed(const Tensor& f_hat, std::size_t next, const ScaleSchedule& s, const Tensor& w, const Tensor& b) {
  Graph g(false);
  return embed_scale(g, f_hat, next, s, Interpolation::kBilinear, g.constant(w), g.constant(b)).value();
}

TEST(EmbedScale, ZeroMapWithZeroBiasIsZero) {
  Rng rng(8);
  const ScaleSchedule s({1, 2, 4});
  const Tensor e = embed(Tensor::matrix(16, 3), 2, s, random_tensor(rng, 5, 3), Tensor::matrix(1, 5));
  EXPECT_EQ(e, Tensor::matrix(4, 5));
}

TEST(EmbedScale, FinalSizeIsPureProjection) {
  Rng rng(9);
  const ScaleSchedule s({1, 2, 4});
  const Tensor f = random_tensor(rng, 16, 3), w = random_tensor(rng, 5, 3), b = random_tensor(rng, 1, 5);
  const Tensor e = embed(f, 4, s, w, b);
  ASSERT_EQ(e.shape(), (Shape{16, 5}));
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t o = 0; o < 5; ++o) {
      double ref = b(0, o);
      for (std::size_t c = 0; c < 3; ++c) ref += f(p, c) * w(o, c);
      EXPECT_NEAR(e(p, o), ref, 1e-12);
    }
}

TEST(EmbedScale, ConstantMapGivesIdenticalRows) {
  Rng rng(10);
  const ScaleSchedule s({1, 3, 4});
  Tensor f = Tensor::matrix(16, 3);
  const Tensor v = random_tensor(rng, 1, 3);
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t c = 0; c < 3; ++c) f(p, c) = v(0, c);
  const Tensor e = embed(f, 3, s, random_tensor(rng, 5, 3), random_tensor(rng, 1, 5));
  for (std::size_t p = 1; p < 9; ++p)
    for (std::size_t o = 0; o < 5; ++o) EXPECT_EQ(e(p, o), e(0, o));
}

TEST(EmbedScale, RejectsSizeOutsideSchedule) {
  const ScaleSchedule s({1, 2, 4});
  EXPECT_THROW(embed(Tensor::matrix(16, 3), 3, s, Tensor::matrix(5, 3), Tensor::matrix(1, 5)), ConfigError);
}

// ---------------------------------------------------------------------------
// Module

TEST(MarkovStateModule, DisabledHistoryPoolsToZero) {
  ParameterStore store;
  Rng rng(11);
  HistoryConfig cfg{8, 4, 3, 2, false, false, false, Interpolation::kBilinear};
  const MarkovStateModule m(store, cfg, rng);
  Graph g(false);
  std::vector<Var> window{g.constant(random_tensor(rng, 3, 8))};
  EXPECT_EQ(m.pool(g, store, window).value(), Tensor::matrix(1, 8));
}

TEST(MarkovStateModule, ShapesAndClassChecks) {
  ParameterStore store;
  Rng rng(12);
  HistoryConfig cfg{8, 4, 3, 2, true, true, false, Interpolation::kBilinear};
  const MarkovStateModule m(store, cfg, rng);
  EXPECT_NE(store.find("hist.key.w"), nullptr);
  Graph g(false);
  const Var sos = m.sos(g, store, 2);
  EXPECT_EQ(sos.shape(), (Shape{1, 8}));
  EXPECT_THROW(m.sos(g, store, 3), ConfigError);
  const Var e = m.embed(g, store, random_tensor(rng, 4, 4), 1);
  EXPECT_EQ(e.shape(), (Shape{4, 8}));
  std::vector<Var> window{sos, e};
  const Var h = m.pool(g, store, window);
  EXPECT_EQ(m.assemble(g, store, e, h).shape(), (Shape{4, 8}));
}

}  // namespace
}  // namespace msgen
