// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include "msgen/tensor.hpp"

namespace msgen {

/// Resampling kernel for square grids.
///
/// kBilinear uses half-pixel centres with edge clamping (the usual
/// `align_corners = false` convention) in both directions.
/// kNearest replicates source cells when enlarging and averages the covered
/// source area when shrinking; for integer ratios that is block replication and
/// block mean, which makes the two directions adjoint up to the ratio.
enum class Interpolation { kBilinear, kNearest };

std::string_view to_string(Interpolation k) noexcept;
Interpolation parse_interpolation(std::string_view s);

/// Side length of a square grid stored as [side*side, channels]. Throws
/// ShapeError when the row count is not a perfect square.
std::size_t grid_side(const Tensor& grid);

/// Resamples a [side_in^2, C] grid to [side_out^2, C].
Tensor resample(const Tensor& grid, std::size_t side_out, Interpolation kernel);

/// Adjoint of `resample`: maps a gradient on the output grid back to the input grid.
Tensor resample_adjoint(const Tensor& grad_out, std::size_t side_in, Interpolation kernel);

}  // namespace msgen
