// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "msgen/checkpoint.hpp"
#include "msgen/run_config.hpp"
#include "msgen/trainer.hpp"
#include "msgen/transformer.hpp"
#include "msgen/vq_tokenizer.hpp"

namespace msgen {

struct ImageSet {
  std::vector<Tensor> images;
  std::vector<int> labels;
};

/// Loads paths.dataset and checks image geometry against the tokenizer config.
ImageSet load_images(const RunConfig& cfg);

Checkpoint tokenizer_checkpoint(const RunConfig& cfg, const VqTokenizer& tokenizer);
std::unique_ptr<VqTokenizer> tokenizer_from_checkpoint(const Checkpoint& ckpt);

/// Trains a tokenizer on the dataset, logs one record per step and saves paths.tokenizer.
TokenizerTrainLog run_tokenizer_training(const RunConfig& cfg);

std::vector<TrainingExample> tokenize_images(const VqTokenizer& tokenizer, const ImageSet& set,
                                             std::size_t begin, std::size_t end);

/// Splits a dataset into a training range and a held-out tail of cfg.eval_count items.
struct DataSplit {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> eval;
};
DataSplit prepare_data(const RunConfig& cfg, const VqTokenizer& tokenizer);

/// Model checkpoint with parameters, optimizer moments, batch RNG, step and the tokenizer.
Checkpoint training_checkpoint(const RunConfig& cfg, const Model& model, const Trainer& trainer,
                               const VqTokenizer& tokenizer);

/// A model and tokenizer restored from a training checkpoint.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<VqTokenizer> tokenizer;
  std::unique_ptr<Model> model;
  std::uint64_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

struct TrainRunOptions {
  bool resume = false;        // continue from paths.checkpoint
  bool save = true;           // write checkpoints and the metrics log
  std::optional<std::uint64_t> stop_after;  // halt once this many total steps are done
  std::function<void(std::uint64_t step, const StepResult&)> on_step;
};

struct TrainRunResult {
  std::uint64_t start_step = 0;
  std::uint64_t end_step = 0;
  std::vector<double> losses;  // losses[i] is the loss of step start_step + i
  StepResult eval;             // held-out loss after the last step
};

/// Trains the model for train.steps on a tokenizer loaded from paths.tokenizer,
/// checkpointing every train.checkpoint_every steps and at the end.
TrainRunResult run_training(const RunConfig& cfg, const TrainRunOptions& opts = {});

/// As above with an already loaded tokenizer and prepared data.
TrainRunResult run_training(const RunConfig& cfg, const VqTokenizer& tokenizer, const DataSplit& data,
                            const TrainRunOptions& opts = {});

struct AblationRow {
  std::size_t window = 0;
  double final_train_loss = 0.0;  // mean over the last tenth of the steps
  double eval_loss = 0.0;
  std::vector<double> eval_per_scale;
};

/// Trains one model per window size from the same seed and data.
std::vector<AblationRow> ablate_window(const RunConfig& cfg, std::span<const std::size_t> windows,
                                       const VqTokenizer& tokenizer, const DataSplit& data);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace msgen
