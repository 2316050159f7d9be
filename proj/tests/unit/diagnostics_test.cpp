// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "msgen/diagnostics.hpp"
#include "msgen/errors.hpp"
#include "msgen/vq_tokenizer.hpp"
#include "test_support.hpp"

namespace msgen {
namespace {

using testing::random_codebook;
using testing::random_tensor;
using testing::tiny_model;

Tensor scaled(const Tensor& t, double s) {
  Tensor out = t;
  for (double& v : out.values()) v *= s;
  return out;
}

// ---------------------------------------------------------------------------
// RFA

TEST(RfaScore, IdenticalFeaturesScoreOne) {
  Rng rng(1);
  const Tensor f = random_tensor(rng, 16, 5);
  EXPECT_NEAR(rfa_score(f, f), 1.0, 1e-12);
}

TEST(RfaScore, OrthogonalFeaturesScoreZero) {
  Tensor a = Tensor::matrix(4, 2), b = Tensor::matrix(4, 2);
  a(0, 0) = 1.0;
  a(3, 1) = 2.0;
  b(1, 0) = -3.0;
  b(2, 1) = 0.5;
  EXPECT_NEAR(rfa_score(a, b), 0.0, 1e-12);
}

TEST(RfaScore, NegatedFeaturesScoreMinusOne) {
  Rng rng(2);
  const Tensor f = random_tensor(rng, 9, 3);
  EXPECT_NEAR(rfa_score(f, scaled(f, -1.0)), -1.0, 1e-12);
}

TEST(RfaScore, SignedSquareRootOfCosine) {
  // Flattened [1, 0] against [1, 1]: cosine 1/sqrt(2).
  const Tensor a = Tensor::matrix({{1.0, 0.0}});
  const Tensor b = Tensor::matrix({{1.0, 1.0}});
  EXPECT_NEAR(rfa_score(a, b), std::sqrt(1.0 / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(rfa_score(a, scaled(b, -1.0)), -std::sqrt(1.0 / std::sqrt(2.0)), 1e-12);
}

TEST(RfaScore, InvariantToPositiveScaleAndFlipsOnNegation) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(rng, 16, 4), b = random_tensor(rng, 16, 4);
    const Tensor p = random_tensor(rng, 6, 4), q = random_tensor(rng, 6, 4);
    const double s = rfa_score(a, b, p, q);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    const double c = 0.01 + 10.0 * rng.uniform();
    EXPECT_NEAR(rfa_score(scaled(a, c), b, p, q), s, 1e-12);
    EXPECT_NEAR(rfa_score(a, scaled(b, c), p, q), s, 1e-12);
    EXPECT_NEAR(rfa_score(scaled(a, -1.0), b, p, q), -s, 1e-12);
  }
}

TEST(RfaScore, ResamplesInputToOutputGrid) {
  // A constant 2x2 map upsamples to a constant 4x4 map.
  Tensor in = Tensor::matrix(4, 2), out = Tensor::matrix(16, 2);
  for (std::size_t i = 0; i < 4; ++i) in(i, 0) = 1.0, in(i, 1) = -2.0;
  for (std::size_t i = 0; i < 16; ++i) out(i, 0) = 3.0, out(i, 1) = -6.0;
  EXPECT_NEAR(rfa_score(out, in), 1.0, 1e-12);
}

TEST(RfaScore, ZeroNormIsAnError) {
  Rng rng(4);
  const Tensor f = random_tensor(rng, 4, 3);
  EXPECT_THROW(rfa_score(f, Tensor::matrix(4, 3)), NumericError);
  EXPECT_THROW(rfa_score(Tensor::matrix(4, 3), f), NumericError);
}

TEST(RfaScore, MismatchedChannelsRejected) {
  Rng rng(5);
  EXPECT_THROW(rfa_score(random_tensor(rng, 4, 3), random_tensor(rng, 4, 2)), ShapeError);
  EXPECT_THROW(rfa_score(random_tensor(rng, 4, 3), random_tensor(rng, 4, 3), random_tensor(rng, 2, 3),
                         random_tensor(rng, 5, 3)),
               ShapeError);
}

TEST(RfaMatrix, LowerTriangularAndBounded) {
  const ModelConfig cfg = tiny_model({1, 2, 3, 4});
  const Model model(cfg);
  Rng rng(6);
  const Codebook cb = random_codebook(rng, cfg.vocab, cfg.d_code, true);
  RfaOptions opts;
  opts.seed = 9;
  const auto m = rfa_matrix(model, cb, opts);
  ASSERT_EQ(m.size(), 4u);
  for (std::size_t t = 0; t < 4; ++t) {
    ASSERT_EQ(m[t].size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
      if (k >= t) {
        EXPECT_EQ(m[t][k], 0.0);
      } else {
        EXPECT_GE(m[t][k], -1.0);
        EXPECT_LE(m[t][k], 1.0);
      }
    }
  }
  EXPECT_EQ(rfa_matrix(model, cb, opts), m);
  opts.layer = 0;
  EXPECT_NO_THROW(rfa_matrix(model, cb, opts));
  opts.layer = cfg.depth;
  EXPECT_THROW(rfa_matrix(model, cb, opts), ConfigError);
}

// ---------------------------------------------------------------------------
// Perturbation

struct PerturbFixture {
  ModelConfig cfg = tiny_model({1, 2, 4});
  Model model{cfg};
  Codebook codebook;
  PerturbFixture() {
    Rng rng(7);
    codebook = random_codebook(rng, cfg.vocab, cfg.d_code, true);
  }
};

TEST(Perturb, ZeroSigmaGivesZero) {
  const PerturbFixture f;
  for (std::size_t s = 1; s <= 3; ++s) {
    PerturbOptions opts;
    opts.inject_scale = s;
    opts.sigma = 0.0;
    opts.seeds = {1, 2, 3};
    const PerturbMetrics m = perturb_experiment(f.model, f.codebook, opts);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.l1, 0.0);
  }
}

TEST(Perturb, NonNegativeAndDeterministic) {
  const PerturbFixture f;
  PerturbOptions opts;
  opts.inject_scale = 1;
  opts.sigma = 2.0;
  opts.seeds = {4, 5};
  const PerturbMetrics a = perturb_experiment(f.model, f.codebook, opts);
  const PerturbMetrics b = perturb_experiment(f.model, f.codebook, opts);
  EXPECT_GE(a.mse, 0.0);
  EXPECT_GE(a.l1, 0.0);
  EXPECT_EQ(a.mse, b.mse);
  EXPECT_EQ(a.l1, b.l1);
}

TEST(Perturb, LargeNoiseChangesOutput) {
  const PerturbFixture f;
  PerturbOptions opts;
  opts.inject_scale = 2;
  opts.sigma = 5.0;
  opts.seeds = {1, 2, 3, 4};
  const PerturbMetrics m = perturb_experiment(f.model, f.codebook, opts);
  EXPECT_GT(m.mse, 0.0);
  EXPECT_GT(m.l1, 0.0);
}

TEST(Perturb, ImageSpaceWithTokenizer) {
  ModelConfig cfg = tiny_model({1, 2, 4});
  cfg.vocab = 8;
  TokenizerConfig tc;
  tc.image_side = 8;
  tc.d_code = cfg.d_code;
  tc.vocab = cfg.vocab;
  tc.hidden = 8;
  const VqTokenizer tok(tc, cfg.schedule);
  const Model model(cfg);
  PerturbOptions opts;
  opts.inject_scale = 1;
  EXPECT_EQ(perturb_experiment(model, tok.codebook(), opts, &tok).mse, 0.0);
  opts.sigma = 3.0;
  EXPECT_GE(perturb_experiment(model, tok.codebook(), opts, &tok).mse, 0.0);
}

TEST(Perturb, InvalidArgumentsRejected) {
  const PerturbFixture f;
  PerturbOptions opts;
  opts.inject_scale = 0;
  EXPECT_THROW(perturb_experiment(f.model, f.codebook, opts), ConfigError);
  opts.inject_scale = 4;
  EXPECT_THROW(perturb_experiment(f.model, f.codebook, opts), ConfigError);
  opts.inject_scale = 1;
  opts.sigma = -1.0;
  EXPECT_THROW(perturb_experiment(f.model, f.codebook, opts), ConfigError);
  opts.sigma = 0.0;
  opts.seeds.clear();
  EXPECT_THROW(perturb_experiment(f.model, f.codebook, opts), ConfigError);
}

// ---------------------------------------------------------------------------
// Power-law fit

TEST(PowerLawFit, RecoversExactPowerLaw) {
  const std::vector<double> xs{1.0, 2.0, 4.0, 10.0, 33.0, 100.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.5));
  const PowerLawFit fit = power_law_fit(xs, ys);
  EXPECT_NEAR(fit.a, 3.0, 1e-9);
  EXPECT_NEAR(fit.b, -0.5, 1e-9);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(PowerLawFit, ConstantValues) {
  const std::vector<double> xs{1.0, 2.0, 3.0}, ys{4.0, 4.0, 4.0};
  const PowerLawFit fit = power_law_fit(xs, ys);
  EXPECT_EQ(fit.b, 0.0);
  EXPECT_NEAR(fit.a, 4.0, 1e-12);
  EXPECT_EQ(fit.r2, 1.0);
}

TEST(PowerLawFit, TwoPointsInterpolateExactly) {
  const std::vector<double> xs{2.0, 8.0}, ys{5.0, 1.25};
  const PowerLawFit fit = power_law_fit(xs, ys);
  EXPECT_NEAR(fit.b, -1.0, 1e-12);
  EXPECT_NEAR(fit.a, 10.0, 1e-12);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(PowerLawFit, EquivariantUnderScalingX) {
  Rng rng(8);
  std::vector<double> xs, ys;
  for (int i = 0; i < 12; ++i) {
    xs.push_back(1.0 + 50.0 * rng.uniform());
    ys.push_back(0.7 * std::pow(xs.back(), 0.3) * std::exp(0.1 * rng.normal()));
  }
  const PowerLawFit base = power_law_fit(xs, ys);
  EXPECT_LT(base.r2, 1.0);
  for (double c : {0.1, 3.0, 250.0}) {
    std::vector<double> cx = xs;
    for (double& x : cx) x *= c;
    const PowerLawFit fit = power_law_fit(cx, ys);
    EXPECT_NEAR(fit.b, base.b, 1e-9);
    EXPECT_NEAR(fit.a, base.a * std::pow(c, -base.b), 1e-9 * base.a);
    EXPECT_NEAR(fit.r2, base.r2, 1e-9);
  }
}

TEST(PowerLawFit, InvalidInputsRejected) {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, bad{1.0, -2.0}, zero{0.0, 2.0}, same{3.0, 3.0};
  EXPECT_THROW(power_law_fit(one, one), ConfigError);
  EXPECT_THROW(power_law_fit(two, one), ConfigError);
  EXPECT_THROW(power_law_fit(two, bad), ConfigError);
  EXPECT_THROW(power_law_fit(zero, two), ConfigError);
  EXPECT_THROW(power_law_fit(same, two), ConfigError);
}

}  // namespace
}  // namespace msgen
