// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/rope.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "msgen/errors.hpp"

namespace msgen {

Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, std::size_t heads, double base,
                  bool inverse) {
  require_rank2("rope", x.shape());
  if (heads == 0 || x.cols() % heads != 0) {
    throw ShapeError("rope: width " + std::to_string(x.cols()) + " is not divisible by " + std::to_string(heads) +
                     " heads");
  }
  const std::size_t head_dim = x.cols() / heads;
  if (head_dim % 2 != 0) throw ShapeError("rope: head_dim " + std::to_string(head_dim) + " is odd");
  if (positions.size() != x.rows()) {
    throw ShapeError("rope: " + std::to_string(positions.size()) + " positions for " + std::to_string(x.rows()) +
                     " tokens");
  }
  std::vector<double> freq(head_dim / 2);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    freq[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
  }
  Tensor out(x.shape(), 0.0);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const double pos = static_cast<double>(positions[n]);
    for (std::size_t i = 0; i < freq.size(); ++i) {
      const double angle = pos * freq[i];
      const double c = std::cos(angle);
      const double s = inverse ? -std::sin(angle) : std::sin(angle);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t col = h * head_dim + 2 * i;
        const double x0 = x(n, col);
        const double x1 = x(n, col + 1);
        out(n, col) = x0 * c - x1 * s;
        out(n, col + 1) = x0 * s + x1 * c;
      }
    }
  }
  return out;
}

}  // namespace msgen
