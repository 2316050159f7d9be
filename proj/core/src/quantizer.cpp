// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/quantizer.hpp"

#include <algorithm>
#include <string>

#include "msgen/errors.hpp"

namespace msgen {

Codebook::Codebook(Tensor e, bool zero) : entries(std::move(e)), zero_code(zero) {
  require_rank2("Codebook", entries.shape());
  if (entries.rows() < 2) throw ConfigError("codebook needs at least 2 entries, got " + std::to_string(entries.rows()));
  if (!entries.all_finite()) throw NumericError("codebook contains non-finite entries");
  if (zero_code) std::fill_n(entries.data(), entries.cols(), 0.0);
}

int Codebook::nearest(std::span<const double> v) const {
  if (v.size() != dim())
    throw ShapeError("Codebook::nearest: vector of " + std::to_string(v.size()) + " for codes of dim " +
                     std::to_string(dim()));
  int best = 0;
  double best_d = 0.0;
  for (std::size_t k = 0; k < vocab(); ++k) {
    const auto row = entries.row_span(k);
    double d = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double diff = v[j] - row[j];
      d += diff * diff;
    }
    if (k == 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

Tensor Codebook::lookup(std::span<const int> indices) const {
  Tensor out = Tensor::matrix(indices.size(), dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= vocab()) {
      throw ShapeError("code index " + std::to_string(indices[i]) + " outside vocabulary of " + std::to_string(vocab()));
    }
    const auto row = entries.row_span(static_cast<std::size_t>(indices[i]));
    std::copy(row.begin(), row.end(), out.row_span(i).begin());
  }
  return out;
}

void ResidualPyramid::validate(const ScaleSchedule& schedule, std::size_t vocab) const {
  if (grids.size() != schedule.count()) {
    throw ConfigError("pyramid has " + std::to_string(grids.size()) + " scales, schedule " + schedule.to_string() +
                      " has " + std::to_string(schedule.count()));
  }
  for (std::size_t t = 0; t < grids.size(); ++t) {
    if (grids[t].size() != schedule.tokens(t)) {
      throw ConfigError("pyramid scale " + std::to_string(t) + " holds " + std::to_string(grids[t].size()) +
                        " indices, expected " + std::to_string(schedule.tokens(t)));
    }
    for (int idx : grids[t]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= vocab) {
        throw ShapeError("pyramid scale " + std::to_string(t) + " has index " + std::to_string(idx) +
                         " outside vocabulary of " + std::to_string(vocab));
      }
    }
  }
}

void add_scale(Tensor& f_hat, std::span<const int> indices, const Codebook& codebook, std::size_t side,
               Interpolation kernel) {
  const Tensor codes = codebook.lookup(indices);
  const Tensor up = resample(codes, side, kernel);
  for (std::size_t i = 0; i < f_hat.size(); ++i) f_hat[i] += up[i];
}

namespace {

void check_feature_map(const Tensor& f, const Codebook& codebook, const ScaleSchedule& schedule) {
  require_rank2("encode_features", f.shape());
  const std::size_t side = schedule.final_size();
  if (f.rows() != side * side || f.cols() != codebook.dim()) {
    throw ShapeError("encode_features: feature map " + to_string(f.shape()) + " does not match [" +
                     std::to_string(side * side) + ", " + std::to_string(codebook.dim()) + "]");
  }
  if (!f.all_finite()) throw NumericError("encode_features: feature map contains non-finite values");
}

}  // namespace

EncodeResult encode_features(const Tensor& f, const Codebook& codebook, const ScaleSchedule& schedule,
                             Interpolation kernel, std::vector<Tensor>* residuals) {
  check_feature_map(f, codebook, schedule);
  const std::size_t side = schedule.final_size();
  EncodeResult out;
  out.f_hat = Tensor(f.shape(), 0.0);
  Tensor residual(f.shape(), 0.0);
  for (std::size_t t = 0; t < schedule.count(); ++t) {
    for (std::size_t i = 0; i < f.size(); ++i) residual[i] = f[i] - out.f_hat[i];
    const Tensor r = resample(residual, schedule.size(t), kernel);
    std::vector<int> grid(r.rows());
    for (std::size_t p = 0; p < r.rows(); ++p) grid[p] = codebook.nearest(r.row_span(p));
    add_scale(out.f_hat, grid, codebook, side, kernel);
    if (residuals) residuals->push_back(r);
    out.pyramid.grids.push_back(std::move(grid));
  }
  return out;
}

std::vector<Tensor> accumulate_pyramid(const ResidualPyramid& pyramid, const Codebook& codebook,
                                       const ScaleSchedule& schedule, Interpolation kernel) {
  pyramid.validate(schedule, codebook.vocab());
  const std::size_t side = schedule.final_size();
  std::vector<Tensor> out;
  Tensor f_hat = Tensor::matrix(side * side, codebook.dim());
  for (std::size_t t = 0; t < schedule.count(); ++t) {
    add_scale(f_hat, pyramid.grids[t], codebook, side, kernel);
    out.push_back(f_hat);
  }
  return out;
}

Tensor decode_pyramid(const ResidualPyramid& pyramid, const Codebook& codebook, const ScaleSchedule& schedule,
                      Interpolation kernel) {
  return accumulate_pyramid(pyramid, codebook, schedule, kernel).back();
}

}  // namespace msgen
