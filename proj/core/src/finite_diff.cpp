// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msgen/errors.hpp"

namespace msgen {
namespace {

double evaluate(const LossBuilder& loss, const std::string& where) {
  Graph g(/*track_gradients=*/false);
  const double v = loss(g).value().item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss at " + where);
  return v;
}

}  // namespace

FiniteDiffReport finite_diff_check(ParameterStore& params, const LossBuilder& loss, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  params.zero_grad();
  {
    Graph g;
    Var l = loss(g);
    if (!std::isfinite(l.value().item())) throw NumericError("finite_diff_check: non-finite loss at the base point");
    g.backward(l);
    g.accumulate_into(params);
  }

  FiniteDiffReport report;
  for (Parameter& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const std::string where = p.name + "[" + std::to_string(i) + "]";
      const double x0 = p.value[i];
      p.value[i] = x0 + h;
      const double fp = evaluate(loss, where + " + h");
      p.value[i] = x0 - h;
      const double fm = evaluate(loss, where + " - h");
      p.value[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace msgen
