// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "msgen/attention_mask.hpp"
#include "msgen/autograd.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/rng.hpp"

/// Differentiable primitives. All operands are rank-2 unless stated; a scalar
/// is [1, 1] and a row vector [1, n].
namespace msgen::ops {

/// Names of every primitive in this header, in declaration order.
std::vector<std::string_view> primitive_catalog();

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T
/// x W^T + b with W stored [out, in] and optional bias [1, out].
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);              // row [1, n] broadcast over rows of a
Var broadcast_rows(Var row, std::size_t n);  // [1, d] -> [n, d]

Var sum(Var a);
Var mean(Var a);

Var silu(Var a);
Var tanh(Var a);

/// Softmax over the last axis.
Var softmax(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var rms_norm(Var x, Var gamma, double eps = 1e-6);

/// Rows of `table` selected by `indices`.
Var embedding(Var table, std::span<const int> indices);

Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

/// Bilinear/nearest resampling of a square grid [s_in^2, C] -> [s_out^2, C].
Var resample(Var grid, std::size_t side_out, Interpolation kernel);

/// Mean token cross-entropy of logits [n, V] against integer targets.
Var cross_entropy(Var logits, std::span<const int> targets);

/// Space-to-depth with factor f: [s^2, C] -> [(s/f)^2, f*f*C]. The inverse is unpatchify.
Var patchify(Var grid, std::size_t factor);
Var unpatchify(Var grid, std::size_t factor);

Var rope(Var x, std::span<const std::size_t> positions, std::size_t heads, double base);

/// Zeroes entries with probability `rate` and rescales survivors by 1/(1-rate).
Var dropout(Var x, double rate, Rng& rng);

/// Value of `target`, gradient passed straight through to `x`.
Var straight_through(Var x, const Tensor& target);

/// Receives post-softmax attention weights, one [L, L] matrix per head.
struct AttentionProbe {
  std::vector<Tensor> weights;
};

struct AttentionOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when dropout > 0
  AttentionProbe* probe = nullptr;
};

/// Multi-head scaled dot-product attention over q, k, v [L, heads * head_dim].
/// Keys outside a query's mask range get weight exactly zero.
Var attention(Var q, Var k, Var v, const AttentionMask& mask, std::size_t heads, const AttentionOptions& opts = {});

}  // namespace msgen::ops
