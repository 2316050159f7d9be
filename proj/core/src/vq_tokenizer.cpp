// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/vq_tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msgen/errors.hpp"
#include "msgen/ops.hpp"
#include "msgen/rng.hpp"

namespace msgen {
namespace {

Tensor init_matrix(Rng& rng, std::size_t out, std::size_t in) {
  Tensor w = Tensor::matrix(out, in);
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.values()) v = std * rng.normal();
  return w;
}

std::string enc_name(std::size_t i, const char* what) { return "tok.enc." + std::to_string(i) + "." + what; }
std::string dec_name(std::size_t i, const char* what) { return "tok.dec." + std::to_string(i) + "." + what; }

Var mse(Var a, Var b) {
  Var d = ops::sub(a, b);
  return ops::mean(ops::mul(d, d));
}

}  // namespace

std::vector<std::size_t> stage_factors(std::size_t image_side, std::size_t latent_side) {
  if (latent_side == 0 || image_side % latent_side != 0) {
    throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by latent side " +
                      std::to_string(latent_side));
  }
  std::size_t ratio = image_side / latent_side;
  std::vector<std::size_t> f;
  while (ratio % 2 == 0) {
    f.push_back(2);
    ratio /= 2;
  }
  if (ratio > 1) f.push_back(ratio);
  return f;
}

std::vector<std::string> TokenizerConfig::issues(const ScaleSchedule& schedule) const {
  std::vector<std::string> out;
  if (channels != 1 && channels != 3) out.push_back("tokenizer.channels must be 1 or 3");
  if (d_code == 0) out.push_back("tokenizer.d_code must be positive");
  if (vocab < 2) out.push_back("tokenizer.vocab must be at least 2");
  if (hidden == 0) out.push_back("tokenizer.hidden must be positive");
  if (image_side % schedule.final_size() != 0) {
    out.push_back("tokenizer.image_side " + std::to_string(image_side) + " is not divisible by the final scale " +
                  std::to_string(schedule.final_size()));
  }
  if (!(commitment >= 0.0)) out.push_back("tokenizer.commitment must be non-negative");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) out.push_back("tokenizer.ema_decay must lie in [0, 1)");
  if (!(lr > 0.0)) out.push_back("tokenizer.lr must be positive");
  if (batch == 0) out.push_back("tokenizer.batch must be positive");
  if (restart_every == 0) out.push_back("tokenizer.restart_every must be positive");
  return out;
}

VqTokenizer::VqTokenizer(TokenizerConfig cfg, ScaleSchedule schedule) : cfg_(cfg), schedule_(std::move(schedule)) {
  if (auto issues = cfg_.issues(schedule_); !issues.empty()) throw ConfigError(issues);
  factors_ = stage_factors(cfg_.image_side, schedule_.final_size());
  Rng rng(derive_seed(cfg_.seed, 0x70c));

  std::size_t in = cfg_.channels;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const std::size_t fan_in = in * factors_[i] * factors_[i];
    params_.add(enc_name(i, "w"), init_matrix(rng, cfg_.hidden, fan_in), true);
    params_.add(enc_name(i, "b"), Tensor::matrix(1, cfg_.hidden));
    in = cfg_.hidden;
  }
  params_.add("tok.enc.out.w", init_matrix(rng, cfg_.d_code, cfg_.hidden), true);
  params_.add("tok.enc.out.b", Tensor::matrix(1, cfg_.d_code));

  params_.add("tok.dec.in.w", init_matrix(rng, cfg_.hidden, cfg_.d_code), true);
  params_.add("tok.dec.in.b", Tensor::matrix(1, cfg_.hidden));
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    const std::size_t i = factors_.size() - 1 - j;  // stage being undone
    const std::size_t out_c = i == 0 ? cfg_.channels : cfg_.hidden;
    const std::size_t width = out_c * factors_[i] * factors_[i];
    params_.add(dec_name(j, "w"), init_matrix(rng, width, cfg_.hidden), true);
    params_.add(dec_name(j, "b"), Tensor::matrix(1, width));
  }

  Tensor entries = Tensor::matrix(cfg_.vocab, cfg_.d_code);
  for (double& v : entries.values()) v = 0.5 * rng.normal();
  codebook_ = Codebook(std::move(entries), cfg_.zero_code);
  ema_count_ = Tensor::matrix(cfg_.vocab, 1, 1.0);
  ema_sum_ = codebook_.entries;
}

Var VqTokenizer::encode(Graph& g, Var x) const {
  const std::size_t side = grid_side(x.value());
  if (side != cfg_.image_side || x.cols() != cfg_.channels) {
    throw ShapeError("tokenizer encode: image " + to_string(x.shape()) + " does not match " +
                     std::to_string(cfg_.image_side) + "x" + std::to_string(cfg_.image_side) + "x" +
                     std::to_string(cfg_.channels));
  }
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    x = ops::patchify(x, factors_[i]);
    x = ops::silu(ops::linear(x, g.parameter(*params_.find(enc_name(i, "w"))),
                              g.parameter(*params_.find(enc_name(i, "b")))));
  }
  return ops::linear(x, g.parameter(*params_.find("tok.enc.out.w")), g.parameter(*params_.find("tok.enc.out.b")));
}

Var VqTokenizer::decode(Graph& g, Var f) const {
  const std::size_t side = schedule_.final_size();
  if (f.rows() != side * side || f.cols() != cfg_.d_code) {
    throw ShapeError("tokenizer decode: features " + to_string(f.shape()) + " do not match [" +
                     std::to_string(side * side) + ", " + std::to_string(cfg_.d_code) + "]");
  }
  Var x = ops::silu(
      ops::linear(f, g.parameter(*params_.find("tok.dec.in.w")), g.parameter(*params_.find("tok.dec.in.b"))));
  for (std::size_t j = 0; j < factors_.size(); ++j) {
    const std::size_t i = factors_.size() - 1 - j;
    x = ops::linear(x, g.parameter(*params_.find(dec_name(j, "w"))), g.parameter(*params_.find(dec_name(j, "b"))));
    x = ops::unpatchify(x, factors_[i]);
    if (i != 0) x = ops::silu(x);
  }
  return x;
}

Tensor VqTokenizer::encode(const Tensor& image) const {
  Graph g(false);
  return encode(g, g.constant(image)).value();
}

Tensor VqTokenizer::decode(const Tensor& features) const {
  Graph g(false);
  return decode(g, g.constant(features)).value();
}

EncodeResult VqTokenizer::tokenize(const Tensor& image) const {
  return encode_features(encode(image), codebook_, schedule_, cfg_.kernel);
}

Tensor VqTokenizer::decode_pyramid(const ResidualPyramid& pyramid) const {
  return decode(msgen::decode_pyramid(pyramid, codebook_, schedule_, cfg_.kernel));
}

double VqTokenizer::reconstruction_mse(const std::vector<Tensor>& images) const {
  if (images.empty()) throw ConfigError("reconstruction_mse: no images");
  double total = 0.0;
  std::size_t count = 0;
  for (const Tensor& x : images) {
    const Tensor recon = decode(tokenize(x).f_hat);
    for (std::size_t i = 0; i < x.size(); ++i) total += (recon[i] - x[i]) * (recon[i] - x[i]);
    count += x.size();
  }
  return total / static_cast<double>(count);
}

std::map<std::string, Tensor> VqTokenizer::state() const {
  std::map<std::string, Tensor> out;
  for (const Parameter& p : params_) out[p.name] = p.value;
  out["tok.codebook"] = codebook_.entries;
  out["tok.ema_count"] = ema_count_;
  out["tok.ema_sum"] = ema_sum_;
  return out;
}

void VqTokenizer::load_state(const std::map<std::string, Tensor>& tensors) {
  auto take = [&](const std::string& name, Tensor& dst) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("tokenizer state is missing tensor " + name);
    if (it->second.shape() != dst.shape()) {
      throw ShapeError("tokenizer tensor " + name + " has shape " + to_string(it->second.shape()) + ", expected " +
                       to_string(dst.shape()));
    }
    dst = it->second;
  };
  for (Parameter& p : params_) take(p.name, p.value);
  take("tok.codebook", codebook_.entries);
  take("tok.ema_count", ema_count_);
  take("tok.ema_sum", ema_sum_);
}

std::size_t codebook_utilization(const VqTokenizer& tokenizer, const std::vector<Tensor>& images) {
  std::set<int> used;
  for (const Tensor& x : images)
    for (const auto& grid : tokenizer.tokenize(x).pyramid.grids) used.insert(grid.begin(), grid.end());
  return used.size();
}

TokenizerTrainLog train_tokenizer(VqTokenizer& tok, const std::vector<Tensor>& images,
                                  const TokenizerStepCallback& on_step) {
  if (images.empty()) throw ConfigError("tokenizer training needs at least one image");
  const TokenizerConfig& cfg = tok.config();
  for (const Tensor& x : images) {
    if (x.rows() != cfg.image_side * cfg.image_side || x.cols() != cfg.channels) {
      throw ShapeError("training image " + to_string(x.shape()) + " is not a square " +
                       std::to_string(cfg.image_side) + "x" + std::to_string(cfg.image_side) + " image");
    }
  }

  const std::size_t V = cfg.vocab, D = cfg.d_code;
  const std::size_t first_code = cfg.zero_code ? 1 : 0;
  AdamW opt(tok.params(), AdamWConfig{cfg.lr, 0.9, 0.95, 1e-8, 0.0});
  Rng rng(derive_seed(cfg.seed, 0x7a1));
  std::vector<std::size_t> order(images.size());
  std::size_t cursor = order.size();

  TokenizerTrainLog log;
  log.initial_mse = tok.reconstruction_mse(images);
  double epoch_sum = 0.0;
  std::size_t epoch_batches = 0;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    tok.params().zero_grad();
    Tensor counts = Tensor::matrix(V, 1);
    Tensor sums = Tensor::matrix(V, D);
    std::vector<std::vector<double>> recent;  // residual rows, candidates for restarts
    double loss_total = 0.0, mse_total = 0.0;

    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        if (epoch_batches > 0) {
          log.epoch_mse.push_back(epoch_sum / static_cast<double>(epoch_batches));
          epoch_sum = 0.0;
          epoch_batches = 0;
        }
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const Tensor& x = images[order[cursor++]];

      Graph g;
      Var xin = g.constant(x);
      Var f = tok.encode(g, xin);
      std::vector<Tensor> residuals;
      const EncodeResult enc = encode_features(f.value(), tok.codebook(), tok.schedule(), cfg.kernel, &residuals);
      Var zq = ops::straight_through(f, enc.f_hat);
      Var recon = tok.decode(g, zq);
      Var rec_loss = mse(recon, xin);
      Var commit = mse(f, g.constant(enc.f_hat));
      Var loss = ops::add(rec_loss, ops::scale(commit, cfg.commitment));
      g.backward(loss);
      g.accumulate_into(tok.params(), 1.0 / static_cast<double>(cfg.batch));
      loss_total += loss.value().item();
      mse_total += rec_loss.value().item();

      for (std::size_t t = 0; t < residuals.size(); ++t) {
        const auto& grid = enc.pyramid.grids[t];
        for (std::size_t p = 0; p < grid.size(); ++p) {
          const auto k = static_cast<std::size_t>(grid[p]);
          counts[k] += 1.0;
          const auto row = residuals[t].row_span(p);
          for (std::size_t j = 0; j < D; ++j) sums(k, j) += row[j];
          recent.emplace_back(row.begin(), row.end());
        }
      }
    }
    const double loss_mean = loss_total / static_cast<double>(cfg.batch);
    if (!std::isfinite(loss_mean)) {
      throw NumericError("tokenizer training produced a non-finite loss at step " + std::to_string(step));
    }
    opt.step(tok.params());

    // EMA codebook update with Laplace smoothing of the counts.
    const double gamma = cfg.ema_decay;
    Tensor& ema_n = tok.ema_count();
    Tensor& ema_m = tok.ema_sum();
    double total = 0.0;
    for (std::size_t k = first_code; k < V; ++k) {
      ema_n[k] = gamma * ema_n[k] + (1.0 - gamma) * counts[k];
      for (std::size_t j = 0; j < D; ++j) ema_m(k, j) = gamma * ema_m(k, j) + (1.0 - gamma) * sums(k, j);
      total += ema_n[k];
    }
    const double eps = 1e-5;
    const double active = static_cast<double>(V - first_code);
    Tensor& entries = tok.codebook().entries;
    for (std::size_t k = first_code; k < V; ++k) {
      const double n = (ema_n[k] + eps) / (total + active * eps) * total;
      for (std::size_t j = 0; j < D; ++j) entries(k, j) = ema_m(k, j) / n;
    }
    if (cfg.restart_dead && (step + 1) % cfg.restart_every == 0 && !recent.empty()) {
      for (std::size_t k = first_code; k < V; ++k) {
        if (ema_n[k] >= cfg.dead_threshold) continue;
        const auto& src = recent[rng.below(recent.size())];
        for (std::size_t j = 0; j < D; ++j) {
          entries(k, j) = src[j];
          ema_m(k, j) = src[j];
        }
        ema_n[k] = 1.0;
      }
    }

    const double mse_mean = mse_total / static_cast<double>(cfg.batch);
    epoch_sum += mse_mean;
    ++epoch_batches;
    log.step_loss.push_back(loss_mean);
    if (on_step) on_step(step, loss_mean, mse_mean);
  }
  if (epoch_batches > 0) log.epoch_mse.push_back(epoch_sum / static_cast<double>(epoch_batches));
  log.final_mse = tok.reconstruction_mse(images);
  log.codes_used = codebook_utilization(tok, images);
  return log;
}

}  // namespace msgen
