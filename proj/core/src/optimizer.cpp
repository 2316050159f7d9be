// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/optimizer.hpp"

#include <cmath>
#include <string>

#include "msgen/errors.hpp"

namespace msgen {

void AdamWConfig::validate() const {
  std::vector<std::string> issues;
  if (!(lr >= 0.0) || !std::isfinite(lr)) issues.push_back("learning rate must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) issues.push_back("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) issues.push_back("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) issues.push_back("eps must be positive");
  if (!(weight_decay >= 0.0)) issues.push_back("weight decay must be non-negative");
  if (!issues.empty()) throw ConfigError(issues);
}

AdamW::AdamW(const ParameterStore& params, AdamWConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const Parameter& p : params) {
    m_.emplace_back(p.value.shape(), 0.0);
    v_.emplace_back(p.value.shape(), 0.0);
  }
}

void AdamW::step(ParameterStore& params) {
  if (params.size() != m_.size()) throw std::logic_error("AdamW: parameter count changed since construction");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const double wd = p.decay ? cfg_.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps) + wd * p.value[k];
      p.value[k] -= cfg_.lr * update;
    }
  }
}

}  // namespace msgen
