// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msgen/autograd.hpp"
#include "msgen/errors.hpp"
#include "msgen/interpolation.hpp"
#include "msgen/rng.hpp"
#include "msgen/schedule.hpp"

namespace msgen {

/// FIFO of the N most recent embedded scales, oldest first. A push into a
/// full window evicts the oldest item before appending.
template <class Item>
class SlidingWindow {
 public:
  SlidingWindow(std::size_t capacity, std::size_t width) : capacity_(capacity), width_(width) {
    if (capacity == 0) throw ConfigError("sliding window capacity must be at least 1");
  }

  void push(Item item) {
    if (item.cols() != width_) {
      throw ShapeError("window push: item has " + std::to_string(item.cols()) + " columns, window holds " +
                       std::to_string(width_));
    }
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::deque<Item>& items() const noexcept { return items_; }
  std::vector<Item> snapshot() const { return {items_.begin(), items_.end()}; }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const Item& it : items_) n += it.rows();
    return n;
  }

 private:
  std::size_t capacity_;
  std::size_t width_;
  std::deque<Item> items_;
};

/// h = softmax(q X^T / sqrt(d)) X over the window tokens concatenated oldest
/// to newest. Keys and values are the raw tokens unless projections are
/// given. An empty window yields a [1, d] zero row.
Var pool_history(Graph& g, Var query, std::span<const Var> window, std::optional<Var> key_proj = std::nullopt,
                 std::optional<Var> value_proj = std::nullopt);

/// Linear projection of [E | 1 h] from 2w back to w (no bias).
Var assemble_state(Var embedded, Var history, Var projection);

/// Per-position linear embedding of Down(f_hat, next_size).
Var embed_scale(Graph& g, const Tensor& f_hat, std::size_t next_size, const ScaleSchedule& schedule,
                Interpolation kernel, Var weight, Var bias);

struct HistoryConfig {
  std::size_t width = 0;
  std::size_t d_code = 0;
  std::size_t classes = 0;
  std::size_t window = 3;
  bool enabled = true;             // false: h is always zero
  bool kv_projection = false;      // learned key/value maps in pooling
  bool class_every_scale = false;  // add the class embedding to every E_t
  Interpolation kernel = Interpolation::kBilinear;
};

/// Learnable pieces of the history path: scale embedding, start-of-sequence
/// table, pooling query, optional key/value maps and the state projection.
/// Holds parameter indices into an external store.
class MarkovStateModule {
 public:
  MarkovStateModule() = default;
  MarkovStateModule(ParameterStore& store, const HistoryConfig& cfg, Rng& rng);

  const HistoryConfig& config() const noexcept { return cfg_; }

  /// E_0: the class embedding as a single token.
  Var sos(Graph& g, const ParameterStore& store, int cls) const;
  /// E_t from a precomputed Down(f_hat, S_{t+1}) grid.
  Var embed(Graph& g, const ParameterStore& store, const Tensor& downsampled, int cls) const;
  Var embed(Graph& g, const ParameterStore& store, const Tensor& f_hat, std::size_t next_size,
            const ScaleSchedule& schedule, int cls) const;
  Var pool(Graph& g, const ParameterStore& store, std::span<const Var> window) const;
  Var assemble(Graph& g, const ParameterStore& store, Var embedded, Var history) const;

 private:
  void check_class(int cls) const;

  HistoryConfig cfg_;
  std::size_t embed_w_ = 0, embed_b_ = 0, sos_ = 0, query_ = 0, proj_ = 0;
  std::size_t key_ = 0, value_ = 0;
};

}  // namespace msgen
