// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "msgen/model_config.hpp"
#include "msgen/trainer.hpp"
#include "msgen/vq_tokenizer.hpp"

namespace msgen {

struct RunPaths {
  std::string dataset = "data/shapes";
  std::string tokenizer = "runs/tokenizer.ckpt";
  std::string checkpoint = "runs/model.ckpt";
  std::string metrics = "runs/metrics.jsonl";
};

/// Everything a command needs. Vocabulary and code width live in the
/// tokenizer section and are mirrored into the model by model_config().
struct RunConfig {
  std::uint64_t seed = 0;
  ScaleSchedule schedule{std::vector<std::size_t>{1, 2, 3, 4, 6, 8}};
  ModelConfig model;
  TokenizerConfig tokenizer;
  TrainConfig train;
  std::size_t checkpoint_every = 500;
  std::size_t log_every = 10;
  std::size_t eval_count = 64;  // examples in the held-out evaluation set
  std::size_t data_count = 256;
  RunPaths paths;

  /// Model config with schedule, vocabulary, code width and seed filled in.
  ModelConfig model_config() const;
  TokenizerConfig tokenizer_config() const;
  TrainConfig train_config() const;

  /// Every violated constraint across all sections.
  std::vector<std::string> issues() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys, malformed
/// values and constraint violations are all collected into one ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical key/value form, sorted by key.
std::map<std::string, std::string> config_entries(const RunConfig& cfg);
RunConfig config_from_entries(const std::map<std::string, std::string>& entries);
std::string to_text(const RunConfig& cfg);

}  // namespace msgen
