// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace msgen {

inline constexpr const char* kThreadsEnv = "MARKOV_SCALE_GEN_THREADS";

/// Worker count: hardware concurrency, capped by MARKOV_SCALE_GEN_THREADS when set.
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Callers
/// must make fn(i) independent of scheduling. The exception from the lowest
/// failing index is rethrown after all work finishes.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace msgen
