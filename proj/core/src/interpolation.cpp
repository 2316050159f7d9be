// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "msgen/errors.hpp"

namespace msgen {
namespace {

// One output coordinate along an axis. Bilinear taps are evaluated in lerp
// form x0 + t * (x1 - x0), which reproduces constants exactly.
struct Tap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double t = 0.0;
  // Area taps (shrinking with kNearest): [lo, hi] with per-source weights.
  std::vector<double> weights;
};

std::vector<Tap> axis_taps(std::size_t n_in, std::size_t n_out, Interpolation kernel) {
  std::vector<Tap> taps(n_out);
  const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    Tap& tap = taps[i];
    if (kernel == Interpolation::kBilinear) {
      double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      src = std::max(src, 0.0);
      const auto lo = std::min(static_cast<std::size_t>(std::floor(src)), n_in - 1);
      tap.lo = lo;
      tap.hi = std::min(lo + 1, n_in - 1);
      tap.t = tap.hi == lo ? 0.0 : src - static_cast<double>(lo);
    } else if (n_out >= n_in) {
      const auto src = std::min(static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) * ratio)), n_in - 1);
      tap.lo = tap.hi = src;
    } else {
      const double begin = static_cast<double>(i) * ratio;
      const double end = static_cast<double>(i + 1) * ratio;
      tap.lo = static_cast<std::size_t>(std::floor(begin));
      tap.hi = std::min(static_cast<std::size_t>(std::ceil(end)) - 1, n_in - 1);
      double total = 0.0;
      for (std::size_t s = tap.lo; s <= tap.hi; ++s) {
        const double overlap = std::min(end, static_cast<double>(s + 1)) - std::max(begin, static_cast<double>(s));
        tap.weights.push_back(overlap);
        total += overlap;
      }
      for (double& w : tap.weights) w /= total;
    }
  }
  return taps;
}

// Applies taps along one spatial axis of a [h, w, C] block. `along_rows`
// selects the y axis, otherwise x.
Tensor apply_axis(const Tensor& in, std::size_t h, std::size_t w, std::size_t c, const std::vector<Tap>& taps,
                  bool along_rows) {
  const std::size_t oh = along_rows ? taps.size() : h;
  const std::size_t ow = along_rows ? w : taps.size();
  Tensor out({oh * ow, c}, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const Tap& tap = taps[along_rows ? y : x];
      auto src = [&](std::size_t s) {
        return along_rows ? in.data() + (s * w + x) * c : in.data() + (y * w + s) * c;
      };
      double* dst = out.data() + (y * ow + x) * c;
      if (tap.weights.empty()) {
        const double* a = src(tap.lo);
        const double* b = src(tap.hi);
        if (tap.lo == tap.hi) {
          std::copy(a, a + c, dst);
        } else {
          for (std::size_t k = 0; k < c; ++k) dst[k] = a[k] + tap.t * (b[k] - a[k]);
        }
      } else {
        for (std::size_t s = tap.lo; s <= tap.hi; ++s) {
          const double wgt = tap.weights[s - tap.lo];
          const double* a = src(s);
          for (std::size_t k = 0; k < c; ++k) dst[k] += wgt * a[k];
        }
      }
    }
  }
  return out;
}

// Transpose of apply_axis: scatters output gradients back to [h, w, C].
Tensor apply_axis_adjoint(const Tensor& g, std::size_t h, std::size_t w, std::size_t c, const std::vector<Tap>& taps,
                          bool along_rows) {
  const std::size_t oh = along_rows ? taps.size() : h;
  const std::size_t ow = along_rows ? w : taps.size();
  Tensor in({h * w, c}, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const Tap& tap = taps[along_rows ? y : x];
      auto dst = [&](std::size_t s) {
        return along_rows ? in.data() + (s * w + x) * c : in.data() + (y * w + s) * c;
      };
      const double* src = g.data() + (y * ow + x) * c;
      if (tap.weights.empty()) {
        double* a = dst(tap.lo);
        if (tap.lo == tap.hi) {
          for (std::size_t k = 0; k < c; ++k) a[k] += src[k];
        } else {
          double* b = dst(tap.hi);
          for (std::size_t k = 0; k < c; ++k) {
            a[k] += (1.0 - tap.t) * src[k];
            b[k] += tap.t * src[k];
          }
        }
      } else {
        for (std::size_t s = tap.lo; s <= tap.hi; ++s) {
          const double wgt = tap.weights[s - tap.lo];
          double* a = dst(s);
          for (std::size_t k = 0; k < c; ++k) a[k] += wgt * src[k];
        }
      }
    }
  }
  return in;
}

}  // namespace

std::string_view to_string(Interpolation k) noexcept {
  return k == Interpolation::kBilinear ? "bilinear" : "nearest";
}

Interpolation parse_interpolation(std::string_view s) {
  if (s == "bilinear") return Interpolation::kBilinear;
  if (s == "nearest") return Interpolation::kNearest;
  throw ConfigError("unknown interpolation kernel '" + std::string(s) + "' (expected bilinear or nearest)");
}

std::size_t grid_side(const Tensor& grid) {
  require_rank2("grid_side", grid.shape());
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(grid.rows()))));
  if (side * side != grid.rows()) {
    throw ShapeError("grid_side: " + std::to_string(grid.rows()) + " rows is not a square grid (shape " +
                     to_string(grid.shape()) + ")");
  }
  return side;
}

Tensor resample(const Tensor& grid, std::size_t side_out, Interpolation kernel) {
  const std::size_t side_in = grid_side(grid);
  if (side_out == 0) throw ShapeError("resample: output side must be positive");
  if (side_out == side_in) return grid;
  const std::size_t c = grid.cols();
  const auto taps = axis_taps(side_in, side_out, kernel);
  Tensor across = apply_axis(grid, side_in, side_in, c, taps, /*along_rows=*/false);
  return apply_axis(across, side_in, side_out, c, taps, /*along_rows=*/true);
}

Tensor resample_adjoint(const Tensor& grad_out, std::size_t side_in, Interpolation kernel) {
  const std::size_t side_out = grid_side(grad_out);
  if (side_out == side_in) return grad_out;
  const std::size_t c = grad_out.cols();
  const auto taps = axis_taps(side_in, side_out, kernel);
  Tensor g = apply_axis_adjoint(grad_out, side_in, side_out, c, taps, /*along_rows=*/true);
  return apply_axis_adjoint(g, side_in, side_in, c, taps, /*along_rows=*/false);
}

}  // namespace msgen
