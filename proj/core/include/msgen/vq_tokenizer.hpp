// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msgen/autograd.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/optimizer.hpp"
#include "msgen/quantizer.hpp"
#include "msgen/schedule.hpp"

namespace msgen {

struct TokenizerConfig {
  std::size_t image_side = 32;
  std::size_t channels = 3;
  std::size_t d_code = 32;
  std::size_t vocab = 64;
  std::size_t hidden = 64;
  Interpolation kernel = Interpolation::kBilinear;
  bool zero_code = true;
  double commitment = 0.25;
  double ema_decay = 0.99;
  bool restart_dead = true;
  double dead_threshold = 0.05;  // EMA usage below which a code is restarted
  std::size_t restart_every = 20;
  double lr = 1e-3;
  std::size_t steps = 600;
  std::size_t batch = 8;
  std::uint64_t seed = 0;

  /// Collects every violated constraint, including divisibility of the image side by S_T.
  std::vector<std::string> issues(const ScaleSchedule& schedule) const;
};

/// Downsampling factors of the encoder stages: factors of 2 first, then any remainder.
std::vector<std::size_t> stage_factors(std::size_t image_side, std::size_t latent_side);

/// VQ-VAE with a multi-scale residual quantizer. Encoder stages are
/// space-to-depth followed by a per-position linear map and SiLU; the decoder
/// mirrors them. Features are [S_T^2, d_code] in raster order.
class VqTokenizer {
 public:
  VqTokenizer(TokenizerConfig cfg, ScaleSchedule schedule);

  const TokenizerConfig& config() const noexcept { return cfg_; }
  const ScaleSchedule& schedule() const noexcept { return schedule_; }
  const Codebook& codebook() const noexcept { return codebook_; }
  Codebook& codebook() noexcept { return codebook_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  Var encode(Graph& g, Var image) const;
  Var decode(Graph& g, Var features) const;
  Tensor encode(const Tensor& image) const;
  Tensor decode(const Tensor& features) const;

  EncodeResult tokenize(const Tensor& image) const;
  Tensor decode_pyramid(const ResidualPyramid& pyramid) const;

  /// Mean squared error of decode(quantize(encode(x))) against x.
  double reconstruction_mse(const std::vector<Tensor>& images) const;

  /// Named tensors covering parameters, codebook and EMA statistics.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& tensors);

  // EMA codebook statistics, exposed for training and checkpoints.
  Tensor& ema_count() noexcept { return ema_count_; }
  Tensor& ema_sum() noexcept { return ema_sum_; }

 private:
  TokenizerConfig cfg_;
  ScaleSchedule schedule_;
  std::vector<std::size_t> factors_;
  ParameterStore params_;
  Codebook codebook_;
  Tensor ema_count_;  // [V, 1]
  Tensor ema_sum_;    // [V, d_code]
};

struct TokenizerTrainLog {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<double> epoch_mse;  // mean reconstruction MSE over each pass through the data
  std::vector<double> step_loss;
  std::size_t codes_used = 0;     // distinct indices emitted over the training set
};

using TokenizerStepCallback = std::function<void(std::size_t step, double loss, double mse)>;

/// Straight-through VQ training with commitment loss and EMA codebook updates.
TokenizerTrainLog train_tokenizer(VqTokenizer& tokenizer, const std::vector<Tensor>& images,
                                  const TokenizerStepCallback& on_step = {});

/// Distinct code indices across the pyramids of all images.
std::size_t codebook_utilization(const VqTokenizer& tokenizer, const std::vector<Tensor>& images);

}  // namespace msgen
