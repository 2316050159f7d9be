// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "msgen/tensor.hpp"

namespace msgen {

inline constexpr double kRopeBase = 10000.0;

/// Rotary position encoding. `x` is [tokens, heads * head_dim]; within every
/// head, the pair (2i, 2i+1) of token n is rotated by positions[n] * base^(-2i/head_dim).
/// With `inverse` set the rotation angle is negated (the adjoint).
Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, std::size_t heads = 1,
                  double base = kRopeBase, bool inverse = false);

}  // namespace msgen
