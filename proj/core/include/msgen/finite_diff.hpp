// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "msgen/autograd.hpp"

namespace msgen {

/// Builds a scalar loss on the given graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients against central differences over every
/// coordinate of every parameter. The relative error per coordinate is
/// |analytic - numeric| / max(1, |analytic|). Parameter gradients are
/// overwritten. Throws NumericError on a non-finite loss.
FiniteDiffReport finite_diff_check(ParameterStore& params, const LossBuilder& loss, double h = 1e-5);

}  // namespace msgen
