// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace msgen {

/// Appends one JSON object per line, flushed after each record.
class MetricsLog {
 public:
  /// Truncates the file unless `append` is set.
  MetricsLog(const std::filesystem::path& path, bool append);

  void write(const nlohmann::json& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Reads every record of a JSON-lines file.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

}  // namespace msgen
