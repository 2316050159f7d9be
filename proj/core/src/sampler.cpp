// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msgen/errors.hpp"
#include "msgen/parallel.hpp"
#include "msgen/vq_tokenizer.hpp"

namespace msgen {

std::vector<int> sample_indices(const Tensor& logits, double temperature, std::size_t top_k, Rng& rng) {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  const std::size_t V = logits.cols();
  const std::size_t k = std::min(top_k, V);
  std::vector<int> out(logits.rows());
  std::vector<std::size_t> order(V);
  std::vector<double> p(V);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row_span(r);
    if (temperature == 0.0) {
      out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    const double mx = row[order[0]];
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = std::exp((row[order[i]] - mx) / temperature);
      total += p[i];
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = k - 1;
    for (std::size_t i = 0; i < k; ++i) {
      acc += p[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    out[r] = static_cast<int>(order[pick]);
  }
  return out;
}

GenerationState::GenerationState(const Model& model, const Codebook& codebook, int label, const SampleOptions& opts)
    : model_(&model),
      codebook_(&codebook),
      label_(label),
      opts_(opts),
      keep_all_(opts.retain_history || model.config().attention_mode == AttentionMode::kFullContext),
      window_(model.config().window, model.config().width) {
  const ModelConfig& cfg = model.config();
  if (codebook.vocab() != cfg.vocab || codebook.dim() != cfg.d_code) {
    throw ConfigError("codebook [" + std::to_string(codebook.vocab()) + ", " + std::to_string(codebook.dim()) +
                      "] does not match model vocab " + std::to_string(cfg.vocab) + " and d_code " +
                      std::to_string(cfg.d_code));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= cfg.classes) {
    throw ConfigError("class id " + std::to_string(label) + " outside [0, " + std::to_string(cfg.classes) + ")");
  }
  const std::size_t side = cfg.schedule.final_size();
  f_hat_ = Tensor::matrix(side * side, cfg.d_code);

  Graph g(false);
  Tensor e0 = model.history().sos(g, model.params(), label).value();
  if (opts_.on_embedded) opts_.on_embedded(0, e0);
  embedded_.push_back(std::move(e0));
  windows_.emplace_back();
  states_.push_back(build_state(g, 0));
}

Tensor GenerationState::build_state(Graph& g, std::size_t t) const {
  const ParameterStore& ps = model_->params();
  const MarkovStateModule& hist = model_->history();
  const std::size_t e_index = keep_all_ ? t : embedded_.size() - 1;
  Var e = g.constant(embedded_[e_index]);
  Var h;
  if (t == 0) {
    h = g.constant(Tensor::matrix(1, model_->config().width));
  } else {
    std::vector<Var> items;
    if (keep_all_) {
      for (std::size_t k : windows_[t]) items.push_back(g.constant(embedded_[k]));
    } else {
      for (const Tensor& x : window_.items()) items.push_back(g.constant(x));
    }
    h = hist.pool(g, ps, items);
  }
  return hist.assemble(g, ps, e, h).value();
}

Tensor GenerationState::next_logits() {
  if (finished()) throw std::logic_error("next_logits: all scales already generated");
  Graph g(false);
  ForwardOptions fo;
  fo.hidden = opts_.hidden_trace;
  std::vector<Var> inputs;
  std::size_t first = 0;
  std::size_t live = 0;
  if (model_->config().attention_mode == AttentionMode::kMarkov) {
    inputs.push_back(g.constant(states_.back()));
    first = done_;
    live = states_.back().rows() + window_.token_count();
  } else {
    for (const Tensor& s : states_) {
      inputs.push_back(g.constant(s));
      live += s.rows();
    }
  }
  const auto logits = model_->forward(g, inputs, first, fo);
  ++stats_.forward_calls;
  stats_.peak_live_tokens = std::max(stats_.peak_live_tokens, live);
  return logits.back().value();
}

void GenerationState::advance(std::span<const int> indices) {
  if (finished()) throw std::logic_error("advance: all scales already generated");
  const ModelConfig& cfg = model_->config();
  const ScaleSchedule& sch = cfg.schedule;
  if (indices.size() != sch.tokens(done_)) {
    throw ShapeError("advance: " + std::to_string(indices.size()) + " indices for scale " + std::to_string(done_) +
                     " of " + std::to_string(sch.tokens(done_)) + " tokens");
  }
  add_scale(f_hat_, indices, *codebook_, sch.final_size(), cfg.kernel);
  ++done_;
  if (finished()) return;

  Graph g(false);
  const std::size_t t = done_;
  Tensor e = model_->history().embed(g, model_->params(), resample(f_hat_, sch.size(t), cfg.kernel), label_).value();
  if (opts_.on_embedded) opts_.on_embedded(t, e);

  // Slide the window by the previous embedded scale, then pair E_t with it.
  const Tensor& previous = keep_all_ ? embedded_[t - 1] : embedded_.back();
  window_.push(previous);
  std::vector<std::size_t> ids = windows_.back();
  ids.push_back(t - 1);
  if (ids.size() > cfg.window) ids.erase(ids.begin());
  if (keep_all_) {
    embedded_.push_back(std::move(e));
    windows_.push_back(std::move(ids));
    states_.push_back(build_state(g, t));
  } else {
    embedded_.assign(1, std::move(e));
    windows_.assign(1, std::move(ids));
    states_.assign(1, build_state(g, t));
  }
}

void GenerationState::overwrite_embedded(std::size_t k, const Tensor& tokens) {
  if (!keep_all_) throw std::logic_error("overwrite_embedded requires retained history");
  if (k >= embedded_.size()) throw std::out_of_range("overwrite_embedded: scale not generated yet");
  if (tokens.shape() != embedded_[k].shape()) {
    throw ShapeError("overwrite_embedded: tokens " + to_string(tokens.shape()) + " do not match " +
                     to_string(embedded_[k].shape()));
  }
  embedded_[k] = tokens;
  const std::size_t current = states_.size() - 1;
  Graph g(false);
  for (std::size_t j = 0; j < current; ++j) {
    const auto& w = windows_[j];
    if (j == k || std::find(w.begin(), w.end(), k) != w.end()) states_[j] = build_state(g, j);
  }
}

SampleResult generate(const Model& model, const Codebook& codebook, int label, const SampleOptions& opts,
                      const VqTokenizer* tokenizer) {
  if (!(opts.temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
  const std::size_t top_k = opts.top_k.value_or(model.config().vocab);
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  GenerationState state(model, codebook, label, opts);
  Rng rng(opts.seed);
  SampleResult out;
  while (!state.finished()) {
    const Tensor logits = state.next_logits();
    std::vector<int> idx = sample_indices(logits, opts.temperature, top_k, rng);
    state.advance(idx);
    out.pyramid.grids.push_back(std::move(idx));
  }
  out.f_hat = state.f_hat();
  out.stats = state.stats();
  if (tokenizer) out.image = tokenizer->decode(out.f_hat);
  return out;
}

std::vector<SampleResult> generate_batch(const Model& model, const Codebook& codebook, std::span<const int> labels,
                                         std::span<const std::uint64_t> seeds, const SampleOptions& opts,
                                         const VqTokenizer* tokenizer) {
  if (labels.size() != seeds.size()) throw ConfigError("generate_batch: one seed per label is required");
  if (opts.on_embedded || opts.hidden_trace) throw ConfigError("generate_batch does not support per-item hooks");
  std::vector<SampleResult> out(labels.size());
  parallel_for(labels.size(), [&](std::size_t i) {
    SampleOptions o = opts;
    o.seed = seeds[i];
    out[i] = generate(model, codebook, labels[i], o, tokenizer);
  });
  return out;
}

}  // namespace msgen
