// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msgen/interpolation.hpp"
#include "msgen/schedule.hpp"
#include "msgen/tensor.hpp"

namespace msgen {

/// V x d_code code vectors. With zero_code set, row 0 is the zero vector and
/// is never updated.
struct Codebook {
  Tensor entries;
  bool zero_code = false;

  Codebook() = default;
  Codebook(Tensor entries, bool zero_code);

  std::size_t vocab() const noexcept { return entries.rows(); }
  std::size_t dim() const noexcept { return entries.cols(); }

  /// Index of the nearest code under squared Euclidean distance; ties go to the lowest index.
  int nearest(std::span<const double> v) const;
  /// [n, d_code] rows for the given indices.
  Tensor lookup(std::span<const int> indices) const;
};

/// One S_t x S_t grid of code indices per scale, raster order.
struct ResidualPyramid {
  std::vector<std::vector<int>> grids;

  std::size_t count() const noexcept { return grids.size(); }
  /// Throws ConfigError when grid count or sizes disagree with the schedule,
  /// or ShapeError when an index falls outside [0, vocab).
  void validate(const ScaleSchedule& schedule, std::size_t vocab) const;
  friend bool operator==(const ResidualPyramid&, const ResidualPyramid&) = default;
};

struct EncodeResult {
  ResidualPyramid pyramid;
  Tensor f_hat;  // [S_T^2, d_code]
};

/// Greedy residual quantization of a [S_T^2, d_code] feature map. When
/// `residuals` is given it receives the downsampled residual r_t of each scale.
EncodeResult encode_features(const Tensor& f, const Codebook& codebook, const ScaleSchedule& schedule,
                             Interpolation kernel = Interpolation::kBilinear, std::vector<Tensor>* residuals = nullptr);

/// Sum of upsampled code lookups over all scales.
Tensor decode_pyramid(const ResidualPyramid& pyramid, const Codebook& codebook, const ScaleSchedule& schedule,
                      Interpolation kernel = Interpolation::kBilinear);

/// Accumulated approximation after each scale: element t is f_hat after t+1 scales.
std::vector<Tensor> accumulate_pyramid(const ResidualPyramid& pyramid, const Codebook& codebook,
                                       const ScaleSchedule& schedule, Interpolation kernel = Interpolation::kBilinear);

/// f_hat += Up(lookup(indices), S_T). The single definition of one residual step,
/// shared by encoding, decoding and sampling so their sums agree bit for bit.
void add_scale(Tensor& f_hat, std::span<const int> indices, const Codebook& codebook, std::size_t side,
               Interpolation kernel);

}  // namespace msgen
