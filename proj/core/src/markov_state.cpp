// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/markov_state.hpp"

#include <cmath>
#include <string>

#include "msgen/ops.hpp"

namespace msgen {

Var pool_history(Graph& g, Var query, std::span<const Var> window, std::optional<Var> key_proj,
                 std::optional<Var> value_proj) {
  require_rank2("pool_history", query.shape());
  if (query.rows() != 1) throw ShapeError("pool_history: query must be [1, d], got " + to_string(query.shape()));
  const std::size_t d = query.cols();
  if (window.empty()) return g.constant(Tensor::matrix(1, d));
  for (const Var& x : window) {
    if (x.cols() != d) {
      throw ShapeError("pool_history: window item " + to_string(x.shape()) + " does not match query width " +
                       std::to_string(d));
    }
  }
  Var x = window.size() == 1 ? window[0] : ops::concat_rows(window);
  Var keys = key_proj ? ops::linear(x, *key_proj) : x;
  Var values = value_proj ? ops::linear(x, *value_proj) : x;
  Var scores = ops::scale(ops::matmul_nt(query, keys), 1.0 / std::sqrt(static_cast<double>(d)));
  return ops::matmul(ops::softmax(scores), values);
}

Var assemble_state(Var embedded, Var history, Var projection) {
  require_rank2("assemble_state", embedded.shape());
  if (history.shape() != Shape{1, embedded.cols()}) {
    throw ShapeError("assemble_state: history " + to_string(history.shape()) + " does not match tokens " +
                     to_string(embedded.shape()));
  }
  Var broadcast = ops::broadcast_rows(history, embedded.rows());
  return ops::linear(ops::concat_cols(embedded, broadcast), projection);
}

Var embed_scale(Graph& g, const Tensor& f_hat, std::size_t next_size, const ScaleSchedule& schedule,
                Interpolation kernel, Var weight, Var bias) {
  if (!schedule.contains(next_size)) {
    throw ConfigError("embed_scale: size " + std::to_string(next_size) + " is not in schedule " +
                      schedule.to_string());
  }
  if (grid_side(f_hat) != schedule.final_size()) {
    throw ShapeError("embed_scale: accumulated map " + to_string(f_hat.shape()) + " is not at the final scale " +
                     std::to_string(schedule.final_size()));
  }
  return ops::linear(g.constant(resample(f_hat, next_size, kernel)), weight, bias);
}

namespace {

Tensor normal_matrix(Rng& rng, std::size_t r, std::size_t c, double std) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = std * rng.normal();
  return t;
}

}  // namespace

MarkovStateModule::MarkovStateModule(ParameterStore& store, const HistoryConfig& cfg, Rng& rng) : cfg_(cfg) {
  const std::size_t w = cfg.width;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_code));
  const double s_w = 1.0 / std::sqrt(static_cast<double>(w));
  embed_w_ = store.add("hist.embed.w", normal_matrix(rng, w, cfg.d_code, s_in), true);
  embed_b_ = store.add("hist.embed.b", Tensor::matrix(1, w));
  sos_ = store.add("hist.sos", normal_matrix(rng, cfg.classes, w, 1.0));
  query_ = store.add("hist.query", normal_matrix(rng, 1, w, 1.0));
  if (cfg.kv_projection) {
    key_ = store.add("hist.key.w", normal_matrix(rng, w, w, s_w), true);
    value_ = store.add("hist.value.w", normal_matrix(rng, w, w, s_w), true);
  }
  proj_ = store.add("hist.proj.w", normal_matrix(rng, w, 2 * w, 1.0 / std::sqrt(2.0 * static_cast<double>(w))), true);
}

void MarkovStateModule::check_class(int cls) const {
  if (cls < 0 || static_cast<std::size_t>(cls) >= cfg_.classes) {
    throw ConfigError("class id " + std::to_string(cls) + " outside [0, " + std::to_string(cfg_.classes) + ")");
  }
}

Var MarkovStateModule::sos(Graph& g, const ParameterStore& store, int cls) const {
  check_class(cls);
  const int idx[] = {cls};
  return ops::embedding(g.parameter(store[sos_]), idx);
}

Var MarkovStateModule::embed(Graph& g, const ParameterStore& store, const Tensor& downsampled, int cls) const {
  Var e = ops::linear(g.constant(downsampled), g.parameter(store[embed_w_]), g.parameter(store[embed_b_]));
  if (cfg_.class_every_scale) e = ops::add_row(e, sos(g, store, cls));
  return e;
}

Var MarkovStateModule::embed(Graph& g, const ParameterStore& store, const Tensor& f_hat, std::size_t next_size,
                             const ScaleSchedule& schedule, int cls) const {
  Var e = embed_scale(g, f_hat, next_size, schedule, cfg_.kernel, g.parameter(store[embed_w_]),
                      g.parameter(store[embed_b_]));
  if (cfg_.class_every_scale) e = ops::add_row(e, sos(g, store, cls));
  return e;
}

Var MarkovStateModule::pool(Graph& g, const ParameterStore& store, std::span<const Var> window) const {
  if (!cfg_.enabled) return g.constant(Tensor::matrix(1, cfg_.width));
  std::optional<Var> k, v;
  if (cfg_.kv_projection) {
    k = g.parameter(store[key_]);
    v = g.parameter(store[value_]);
  }
  return pool_history(g, g.parameter(store[query_]), window, k, v);
}

Var MarkovStateModule::assemble(Graph& g, const ParameterStore& store, Var embedded, Var history) const {
  return assemble_state(embedded, history, g.parameter(store[proj_]));
}

}  // namespace msgen
