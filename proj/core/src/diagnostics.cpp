// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msgen/errors.hpp"
#include "msgen/gemm.hpp"
#include "msgen/sampler.hpp"
#include "msgen/vq_tokenizer.hpp"

namespace msgen {
namespace {

Tensor project(const Tensor& x, const Tensor& p) {
  if (p.cols() != x.cols()) {
    throw ShapeError("rfa projection " + to_string(p.shape()) + " does not accept features " + to_string(x.shape()));
  }
  Tensor out = Tensor::matrix(x.rows(), p.rows());
  gemm::nt(x.rows(), p.rows(), x.cols(), x.data(), x.cols(), p.data(), p.cols(), out.data(), p.rows());
  return out;
}

Tensor identity(std::size_t n) {
  Tensor t = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace

double rfa_score(const Tensor& out, const Tensor& in, const Tensor& proj_out, const Tensor& proj_in) {
  const std::size_t side = grid_side(out);
  const Tensor aligned = grid_side(in) == side ? in : resample(in, side, Interpolation::kBilinear);
  const Tensor a = project(out, proj_out);
  const Tensor b = project(aligned, proj_in);
  if (a.cols() != b.cols()) {
    throw ShapeError("rfa projections map to different widths: " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("rfa score undefined: a projected feature has zero norm");
  const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return std::copysign(std::sqrt(std::abs(cosine)), cosine);
}

double rfa_score(const Tensor& out, const Tensor& in) {
  if (out.cols() != in.cols()) {
    throw ShapeError("rfa_score: channel counts differ (" + std::to_string(out.cols()) + " vs " +
                     std::to_string(in.cols()) + ")");
  }
  const Tensor eye = identity(out.cols());
  return rfa_score(out, in, eye, eye);
}

std::vector<std::vector<double>> rfa_matrix(const Model& model, const Codebook& codebook, const RfaOptions& opts) {
  const ModelConfig& cfg = model.config();
  const std::size_t T = cfg.schedule.count();
  const std::size_t layer = opts.layer.value_or(cfg.depth - 1);
  if (layer >= cfg.depth) {
    throw ConfigError("rfa layer " + std::to_string(layer) + " outside [0, " + std::to_string(cfg.depth) + ")");
  }
  Tensor proj;
  if (opts.projection) {
    proj = *opts.projection;
  } else {
    Rng rng(opts.proj_seed);
    proj = Tensor::matrix(cfg.width, cfg.width);
    for (double& v : proj.values()) v = rng.normal() / std::sqrt(static_cast<double>(cfg.width));
  }

  std::vector<Tensor> hidden;
  SampleOptions so;
  so.seed = opts.seed;
  so.temperature = opts.temperature;
  so.retain_history = true;
  so.hidden_trace = &hidden;
  GenerationState state(model, codebook, opts.label, so);
  Rng rng(opts.seed);
  std::vector<Tensor> outputs;
  while (!state.finished()) {
    hidden.clear();
    const Tensor logits = state.next_logits();
    const Tensor& seq = hidden[layer];
    // The last state's tokens sit at the end of the forward sequence.
    const std::size_t n = logits.rows();
    Tensor mine = Tensor::matrix(n, seq.cols());
    std::copy_n(seq.data() + (seq.rows() - n) * seq.cols(), n * seq.cols(), mine.data());
    outputs.push_back(std::move(mine));
    state.advance(sample_indices(logits, opts.temperature, cfg.vocab, rng));
  }
  const auto& inputs = state.states();
  std::vector<std::vector<double>> m(T, std::vector<double>(T, 0.0));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < t; ++k) m[t][k] = rfa_score(outputs[t], inputs[k], proj, proj);
  return m;
}

PerturbMetrics perturb_experiment(const Model& model, const Codebook& codebook, const PerturbOptions& opts,
                                  const VqTokenizer* tokenizer) {
  const std::size_t T = model.config().schedule.count();
  if (opts.inject_scale < 1 || opts.inject_scale > T) {
    throw ConfigError("inject scale " + std::to_string(opts.inject_scale) + " outside [1, " + std::to_string(T) + "]");
  }
  if (!(opts.sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (opts.seeds.empty()) throw ConfigError("perturb experiment needs at least one seed");

  PerturbMetrics total;
  for (std::uint64_t seed : opts.seeds) {
    SampleOptions so;
    so.seed = seed;
    so.temperature = opts.temperature;
    const SampleResult clean = generate(model, codebook, opts.label, so, tokenizer);
    Rng noise(derive_seed(seed, 0x9e));
    const std::size_t target = opts.inject_scale - 1;
    so.on_embedded = [&](std::size_t k, Tensor& e) {
      if (k != target) return;
      for (double& v : e.values()) v += opts.sigma * noise.normal();
    };
    const SampleResult noisy = generate(model, codebook, opts.label, so, tokenizer);
    const Tensor& a = tokenizer ? *clean.image : clean.f_hat;
    const Tensor& b = tokenizer ? *noisy.image : noisy.f_hat;
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      se += (a[i] - b[i]) * (a[i] - b[i]);
      ae += std::abs(a[i] - b[i]);
    }
    total.mse += se / static_cast<double>(a.size());
    total.l1 += ae / static_cast<double>(a.size());
  }
  total.mse /= static_cast<double>(opts.seeds.size());
  total.l1 /= static_cast<double>(opts.seeds.size());
  return total;
}

PowerLawFit power_law_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("power_law_fit: xs and ys differ in length");
  if (xs.size() < 2) throw ConfigError("power_law_fit: at least 2 points are required");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw ConfigError("power_law_fit: inputs must be positive (point " + std::to_string(i) + ")");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("power_law_fit: all xs are equal");
  const bool flat = std::all_of(ly.begin(), ly.end(), [&](double v) { return v == ly[0]; });
  PowerLawFit fit;
  fit.b = flat ? 0.0 : sxy / sxx;
  const double intercept = flat ? ly[0] : my - fit.b * mx;
  fit.a = std::exp(intercept);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (intercept + fit.b * lx[i]);
    ss_res += r * r;
    if (!flat) ss_tot += (ly[i] - my) * (ly[i] - my);
  }
  if (ss_tot == 0.0) {
    fit.r2 = ss_res == 0.0 ? 1.0 : 0.0;
  } else {
    fit.r2 = 1.0 - ss_res / ss_tot;
  }
  return fit;
}

}  // namespace msgen
