// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msgen/optimizer.hpp"
#include "msgen/quantizer.hpp"
#include "msgen/rng.hpp"
#include "msgen/transformer.hpp"

namespace msgen {

/// A ground-truth pyramid with its class and the teacher-path grids
/// Down(f_hat_t, S_{t+1}) for t = 1 .. T-1, which depend only on the frozen codebook.
struct TrainingExample {
  ResidualPyramid pyramid;
  int label = 0;
  std::vector<Tensor> scale_inputs;
};

TrainingExample prepare_example(ResidualPyramid pyramid, int label, const Codebook& codebook,
                                const ScaleSchedule& schedule, Interpolation kernel);

struct TeacherInputs {
  std::vector<Var> states;    // M_0 .. M_{T-1}
  std::vector<Var> embedded;  // E_0 (start token) .. E_{T-1}
  /// windows[t]: indices k of the E_k pooled into M_t, oldest first; empty for M_0.
  std::vector<std::vector<std::size_t>> windows;
};

/// Teacher-forced states: E_t embeds Down(f_hat_t, S_{t+1}); before building
/// M_t the window receives E_{t-1} (evicting the oldest when full), and M_t
/// pairs E_t with the pooled window. M_0 pairs the start token with a zero history.
TeacherInputs build_teacher_inputs(Graph& g, const Model& model, const TrainingExample& example);
TeacherInputs build_teacher_inputs(Graph& g, const Model& model, const ResidualPyramid& pyramid,
                                   const Codebook& codebook, int label);

/// Sum over scales of the token-mean cross-entropy of logits[t] against grid t.
Var sequence_loss(std::span<const Var> logits, const ResidualPyramid& pyramid,
                  std::vector<double>* per_scale = nullptr);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  std::size_t batch = 4;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;

  std::vector<std::string> issues() const;
  AdamWConfig optimizer() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

struct StepResult {
  double loss = 0.0;                // mean over batch items
  std::vector<double> per_scale;    // mean over batch items
};

/// Mean loss and gradient over the batch, then one AdamW update. Items may be
/// evaluated in parallel; gradients are reduced in item order. Item i draws
/// dropout noise from derive_seed(noise_seed, i). Throws NumericError without
/// updating when the loss is not finite.
StepResult train_step(Model& model, AdamW& optimizer, std::span<const TrainingExample* const> batch,
                      std::uint64_t noise_seed, bool training = true);

/// Mean loss over examples without dropout or updates.
StepResult evaluate_loss(const Model& model, std::span<const TrainingExample> examples);

/// Stateful training loop over a fixed example set; batches are drawn with
/// replacement from a checkpointable RNG.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, std::vector<TrainingExample> data);

  StepResult step();

  std::uint64_t steps_done() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  AdamW& optimizer() noexcept { return opt_; }
  const AdamW& optimizer() const noexcept { return opt_; }
  std::string rng_state() const { return rng_.state(); }
  /// Restores loop position after loading parameters and optimizer moments.
  void restore(std::uint64_t step, const std::string& rng_state);

 private:
  Model& model_;
  TrainConfig cfg_;
  std::vector<TrainingExample> data_;
  AdamW opt_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

}  // namespace msgen
