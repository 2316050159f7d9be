// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "msgen/errors.hpp"
#include "msgen/finite_diff.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/ops.hpp"
#include "msgen/rng.hpp"
#include "msgen/rope.hpp"

namespace msgen {
namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

// Reduces an op output to a scalar with fixed random weights so that every
// output element contributes a distinct gradient.
Var weighted_sum(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  Var w = g.constant(random_tensor(rng, out.rows(), out.cols()));
  return ops::sum(ops::mul(out, w));
}

class PrimitiveGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const std::uint64_t seed = GetParam();
  Rng rng(seed);
  const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
  ParameterStore ps;
  const auto a = ps.add("a", random_tensor(rng, m, k));
  const auto b = ps.add("b", random_tensor(rng, k, n));
  const auto bt = ps.add("bt", random_tensor(rng, n, k));
  const auto c = ps.add("c", random_tensor(rng, m, k));
  const auto row = ps.add("row", random_tensor(rng, 1, k));
  const auto bias = ps.add("bias", random_tensor(rng, 1, n));
  const auto gamma = ps.add("gamma", random_tensor(rng, 1, k));
  const auto beta = ps.add("beta", random_tensor(rng, 1, k));
  const auto table = ps.add("table", random_tensor(rng, 5, k));
  std::vector<int> ids(m);
  std::vector<int> targets(m);
  for (std::size_t i = 0; i < m; ++i) {
    ids[i] = static_cast<int>(rng.below(5));
    targets[i] = static_cast<int>(rng.below(n));
  }

  const auto builders = std::vector<std::pair<const char*, LossBuilder>>{
      {"matmul", [&](Graph& g) { return weighted_sum(g, ops::matmul(g.parameter(ps[a]), g.parameter(ps[b])), 1); }},
      {"matmul_nt",
       [&](Graph& g) { return weighted_sum(g, ops::matmul_nt(g.parameter(ps[a]), g.parameter(ps[bt])), 2); }},
      {"linear",
       [&](Graph& g) {
         return weighted_sum(g, ops::linear(g.parameter(ps[a]), g.parameter(ps[bt]), g.parameter(ps[bias])), 3);
       }},
      {"add", [&](Graph& g) { return weighted_sum(g, ops::add(g.parameter(ps[a]), g.parameter(ps[c])), 4); }},
      {"sub", [&](Graph& g) { return weighted_sum(g, ops::sub(g.parameter(ps[a]), g.parameter(ps[c])), 5); }},
      {"mul", [&](Graph& g) { return weighted_sum(g, ops::mul(g.parameter(ps[a]), g.parameter(ps[c])), 6); }},
      {"add_row",
       [&](Graph& g) { return weighted_sum(g, ops::add_row(g.parameter(ps[a]), g.parameter(ps[row])), 7); }},
      {"broadcast_rows", [&](Graph& g) { return weighted_sum(g, ops::broadcast_rows(g.parameter(ps[row]), 3), 8); }},
      {"silu", [&](Graph& g) { return weighted_sum(g, ops::silu(g.parameter(ps[a])), 9); }},
      {"tanh", [&](Graph& g) { return weighted_sum(g, ops::tanh(g.parameter(ps[a])), 10); }},
      {"softmax", [&](Graph& g) { return weighted_sum(g, ops::softmax(g.parameter(ps[a])), 11); }},
      {"layer_norm",
       [&](Graph& g) {
         return weighted_sum(
             g, ops::layer_norm(g.parameter(ps[a]), g.parameter(ps[gamma]), g.parameter(ps[beta])), 12);
       }},
      {"rms_norm",
       [&](Graph& g) { return weighted_sum(g, ops::rms_norm(g.parameter(ps[a]), g.parameter(ps[gamma])), 13); }},
      {"embedding", [&](Graph& g) { return weighted_sum(g, ops::embedding(g.parameter(ps[table]), ids), 14); }},
      {"concat_cols",
       [&](Graph& g) { return weighted_sum(g, ops::concat_cols(g.parameter(ps[a]), g.parameter(ps[c])), 15); }},
      {"concat_rows",
       [&](Graph& g) {
         const Var parts[] = {g.parameter(ps[a]), g.parameter(ps[row]), g.parameter(ps[c])};
         return weighted_sum(g, ops::concat_rows(parts), 16);
       }},
      {"slice_rows", [&](Graph& g) { return weighted_sum(g, ops::slice_rows(g.parameter(ps[a]), 0, m), 17); }},
      {"mean", [&](Graph& g) { return ops::mean(ops::mul(g.parameter(ps[a]), g.parameter(ps[c]))); }},
      {"scale", [&](Graph& g) { return weighted_sum(g, ops::scale(g.parameter(ps[a]), -1.7), 18); }},
      {"cross_entropy",
       [&](Graph& g) { return ops::cross_entropy(ops::matmul(g.parameter(ps[a]), g.parameter(ps[b])), targets); }},
  };
  for (const auto& [name, build] : builders) {
    const auto report = finite_diff_check(ps, build, 1e-5);
    EXPECT_LT(report.max_rel_error, 1e-4) << name << " worst " << report.worst_param << "[" << report.worst_index
                                          << "] seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradient, ::testing::Values(11u, 12u, 13u, 14u, 15u, 16u));

class GridGradient : public ::testing::TestWithParam<std::tuple<std::size_t, std::size_t, Interpolation>> {};

TEST_P(GridGradient, ResampleMatchesCentralDifferences) {
  const auto [side_in, side_out, kernel] = GetParam();
  Rng rng(side_in * 31 + side_out);
  ParameterStore ps;
  const auto x = ps.add("x", random_tensor(rng, side_in * side_in, 3));
  const auto report = finite_diff_check(
      ps, [&](Graph& g) { return weighted_sum(g, ops::resample(g.parameter(ps[x]), side_out, kernel), 21); });
  EXPECT_LT(report.max_rel_error, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Sizes, GridGradient,
                         ::testing::Combine(::testing::Values(1u, 2u, 3u, 5u, 8u), ::testing::Values(1u, 2u, 4u, 7u),
                                            ::testing::Values(Interpolation::kBilinear, Interpolation::kNearest)));

TEST(Numerics, PatchifyRopeAttentionGradients) {
  Rng rng(77);
  ParameterStore ps;
  const auto grid = ps.add("grid", random_tensor(rng, 16, 2));
  const auto q = ps.add("q", random_tensor(rng, 5, 8));
  const auto k = ps.add("k", random_tensor(rng, 5, 8));
  const auto v = ps.add("v", random_tensor(rng, 5, 8));
  EXPECT_LT(finite_diff_check(ps, [&](Graph& g) {
              return weighted_sum(g, ops::patchify(g.parameter(ps[grid]), 2), 31);
            }).max_rel_error,
            1e-4);
  EXPECT_LT(finite_diff_check(ps, [&](Graph& g) {
              return weighted_sum(g, ops::unpatchify(ops::patchify(g.parameter(ps[grid]), 2), 2), 32);
            }).max_rel_error,
            1e-4);
  const std::vector<std::size_t> pos{0, 1, 2, 3, 7};
  EXPECT_LT(finite_diff_check(ps, [&](Graph& g) {
              return weighted_sum(g, ops::rope(g.parameter(ps[q]), pos, 2, kRopeBase), 33);
            }).max_rel_error,
            1e-4);
  for (const AttentionMode mode : {AttentionMode::kMarkov, AttentionMode::kFullContext}) {
    const AttentionMask mask({1, 4}, mode);
    EXPECT_LT(finite_diff_check(ps, [&](Graph& g) {
                return weighted_sum(
                    g, ops::attention(g.parameter(ps[q]), g.parameter(ps[k]), g.parameter(ps[v]), mask, 2), 34);
              }).max_rel_error,
              1e-4);
  }
}

TEST(Numerics, AttentionDropoutGradientWithFixedMask) {
  Rng init(5);
  ParameterStore ps;
  const auto q = ps.add("q", random_tensor(init, 4, 4));
  const auto k = ps.add("k", random_tensor(init, 4, 4));
  const auto v = ps.add("v", random_tensor(init, 4, 4));
  const AttentionMask mask({4}, AttentionMode::kMarkov);
  const auto report = finite_diff_check(ps, [&](Graph& g) {
    Rng rng(99);  // same dropout pattern on every evaluation
    ops::AttentionOptions opts;
    opts.dropout = 0.3;
    opts.rng = &rng;
    return weighted_sum(g, ops::attention(g.parameter(ps[q]), g.parameter(ps[k]), g.parameter(ps[v]), mask, 1, opts),
                        35);
  });
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Numerics, SoftmaxOfZerosIsUniform) {
  Graph g;
  const Tensor out = ops::softmax(g.constant(Tensor::matrix({{0.0, 0.0}}))).value();
  EXPECT_EQ(out(0, 0), 0.5);
  EXPECT_EQ(out(0, 1), 0.5);
}

TEST(Numerics, MatmulWithIdentityIsExact) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, 3, 5);
  Tensor eye = Tensor::matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Graph g;
  EXPECT_EQ(ops::matmul(g.constant(eye), g.constant(x)).value(), x);
}

TEST(Numerics, SumOfSoftmaxHasZeroGradient) {
  Rng rng(4);
  ParameterStore ps;
  const auto x = ps.add("x", random_tensor(rng, 3, 6));
  Graph g;
  g.backward(ops::sum(ops::softmax(g.parameter(ps[x]))));
  g.accumulate_into(ps);
  for (double v : ps[x].grad.values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Numerics, SoftmaxRowsAreDistributions) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor(rng, 1 + rng.below(8), 1 + rng.below(8), 10.0);
    Graph g(false);
    const Tensor p = ops::softmax(g.constant(x)).value();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row_span(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Numerics, BilinearDownUpPreservesConstants) {
  for (std::size_t lo : {1u, 2u, 3u, 5u}) {
    for (std::size_t hi : {4u, 7u, 16u}) {
      const Tensor c({hi * hi, 3}, -0.371);
      const Tensor round = resample(resample(c, lo, Interpolation::kBilinear), hi, Interpolation::kBilinear);
      EXPECT_EQ(round, c) << lo << " " << hi;
    }
  }
}

TEST(Numerics, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  try {
    ops::matmul(g.constant(Tensor::matrix(2, 3)), g.constant(Tensor::matrix(4, 2)));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("[2, 3]"), std::string::npos) << what;
    EXPECT_NE(what.find("[4, 2]"), std::string::npos) << what;
  }
}

TEST(FiniteDiff, SquareAtThree) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::scalar(3.0));
  const auto report =
      finite_diff_check(ps, [&](Graph& g) { return ops::mul(g.parameter(ps[x]), g.parameter(ps[x])); }, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_DOUBLE_EQ(ps[x].grad[0], 6.0);
}

TEST(FiniteDiff, TwoLogitCrossEntropy) {
  ParameterStore ps;
  const auto w = ps.add("w", Tensor::matrix({{0.3, -1.2}, {0.8, 0.1}}));
  const auto x = ps.add("x", Tensor::matrix({{1.5, -0.4}}));
  const std::vector<int> target{1};
  const auto report = finite_diff_check(
      ps, [&](Graph& g) { return ops::cross_entropy(ops::linear(g.parameter(ps[x]), g.parameter(ps[w])), target); });
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(FiniteDiff, ConstantFunctionHasZeroError) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::matrix(2, 2, 1.0));
  const auto report = finite_diff_check(ps, [&](Graph& g) {
    g.parameter(ps[x]);
    return g.constant(Tensor::scalar(4.0));
  });
  EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(FiniteDiff, NonFiniteLossNamesCoordinate) {
  ParameterStore ps;
  const auto x = ps.add("x", Tensor::matrix({{1.0, 0.0}}));
  // log-like blow-up only when the second coordinate moves off zero
  const LossBuilder f = [&](Graph& g) {
    Var v = g.parameter(ps[x]);
    const double second = v.value()[1];
    return g.constant(Tensor::scalar(second != 0.0 ? std::nan("") : 1.0));
  };
  try {
    finite_diff_check(ps, f);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("x[1]"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace msgen
