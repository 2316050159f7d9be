// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msgen/quantizer.hpp"
#include "msgen/transformer.hpp"

namespace msgen {

class VqTokenizer;

/// Signed square root of the cosine between the flattened projections of two
/// feature grids. `in` is resampled (bilinear) to the grid of `out` first.
/// Projections are [c, channels] per-position linear maps. Throws
/// NumericError when either projected feature has zero norm.
double rfa_score(const Tensor& out, const Tensor& in, const Tensor& proj_out, const Tensor& proj_in);
/// Identity projections; both features need the same channel count.
double rfa_score(const Tensor& out, const Tensor& in);

struct RfaOptions {
  int label = 0;
  std::uint64_t seed = 0;           // sampling seed
  std::uint64_t proj_seed = 1;      // projection initialisation
  double temperature = 1.0;
  /// Block whose output is the "output" feature of each scale; unset means the final block.
  std::optional<std::size_t> layer;
  std::optional<Tensor> projection;  // [c, w]; random normal when unset
};

/// Lower-triangular T x T matrix: entry (t, k), k < t, scores the selected
/// block output at scale t against the input state tokens of scale k.
/// Entries with k >= t are 0.
std::vector<std::vector<double>> rfa_matrix(const Model& model, const Codebook& codebook, const RfaOptions& opts);

struct PerturbOptions {
  std::size_t inject_scale = 1;  // 1-based; noise lands on E_{s-1}, the embedding feeding scale s
  double sigma = 0.0;
  std::vector<std::uint64_t> seeds{0};
  int label = 0;
  double temperature = 1.0;
};

struct PerturbMetrics {
  double mse = 0.0;
  double l1 = 0.0;
};

/// Generates each seed twice with shared sampling streams; the second run
/// adds N(0, sigma^2) noise to the embedded tokens of the injection scale
/// before state assembly. Metrics compare decoded images when a tokenizer is
/// supplied, otherwise the accumulated feature maps; averaged over seeds.
PerturbMetrics perturb_experiment(const Model& model, const Codebook& codebook, const PerturbOptions& opts,
                                  const VqTokenizer* tokenizer = nullptr);

struct PowerLawFit {
  double a = 0.0;
  double b = 0.0;
  double r2 = 0.0;
};

/// Least squares of ln y on ln x for y = a x^b. R^2 is 1 when both the
/// residual and the variance are zero, 0 when only the variance is.
PowerLawFit power_law_fit(std::span<const double> xs, std::span<const double> ys);

}  // namespace msgen
