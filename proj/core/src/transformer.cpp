// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/transformer.hpp"

#include <cmath>
#include <numeric>

#include "msgen/errors.hpp"
#include "msgen/rope.hpp"

namespace msgen {
namespace {

Tensor normal_matrix(Rng& rng, std::size_t r, std::size_t c, double std) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = std * rng.normal();
  return t;
}

std::string layer_name(std::size_t l, const char* what) { return "blk." + std::to_string(l) + "." + what; }

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.paper_scaling) cfg_.apply_paper_scaling();
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, 0xb0));
  const std::size_t w = cfg_.width, hid = cfg_.mlp_hidden();
  const double s_w = 1.0 / std::sqrt(static_cast<double>(w));
  const double s_out = s_w / std::sqrt(2.0 * static_cast<double>(cfg_.depth));

  HistoryConfig hc;
  hc.width = w;
  hc.d_code = cfg_.d_code;
  hc.classes = cfg_.classes;
  hc.window = cfg_.window;
  hc.enabled = cfg_.history;
  hc.kv_projection = cfg_.kv_projection;
  hc.class_every_scale = cfg_.class_every_scale;
  hc.kernel = cfg_.kernel;
  history_ = MarkovStateModule(params_, hc, rng);

  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    Layer L{};
    L.norm1 = params_.add(layer_name(l, "norm1"), Tensor::matrix(1, w, 1.0));
    L.wq = params_.add(layer_name(l, "attn.q"), normal_matrix(rng, w, w, s_w), true);
    L.wk = params_.add(layer_name(l, "attn.k"), normal_matrix(rng, w, w, s_w), true);
    L.wv = params_.add(layer_name(l, "attn.v"), normal_matrix(rng, w, w, s_w), true);
    L.wo = params_.add(layer_name(l, "attn.o"), normal_matrix(rng, w, w, s_out), true);
    L.norm2 = params_.add(layer_name(l, "norm2"), Tensor::matrix(1, w, 1.0));
    L.w_gate = params_.add(layer_name(l, "mlp.gate"), normal_matrix(rng, hid, w, s_w), true);
    L.w_up = params_.add(layer_name(l, "mlp.up"), normal_matrix(rng, hid, w, s_w), true);
    L.w_down = params_.add(layer_name(l, "mlp.down"),
                           normal_matrix(rng, w, hid, s_out * std::sqrt(static_cast<double>(w) / hid)), true);
    layers_.push_back(L);
  }
  final_norm_ = params_.add("head.norm", Tensor::matrix(1, w, 1.0));
  head_w_ = params_.add("head.w", normal_matrix(rng, cfg_.vocab, w, s_w), true);
  head_b_ = params_.add("head.b", Tensor::matrix(1, cfg_.vocab));
}

std::size_t Model::state_tokens(std::size_t t) const {
  if (t >= cfg_.schedule.count()) {
    throw ShapeError("state index " + std::to_string(t) + " beyond schedule of " +
                     std::to_string(cfg_.schedule.count()) + " scales");
  }
  return t == 0 ? 1 : cfg_.schedule.tokens(t);
}

std::vector<Var> Model::forward(Graph& g, std::span<const Var> states, std::size_t first,
                                const ForwardOptions& opts) const {
  if (states.empty()) throw ShapeError("forward: no states");
  if (first + states.size() > cfg_.schedule.count()) {
    throw ShapeError("forward: states [" + std::to_string(first) + ", " + std::to_string(first + states.size()) +
                     ") exceed the schedule of " + std::to_string(cfg_.schedule.count()) + " scales");
  }
  const bool use_dropout = opts.training && cfg_.dropout > 0.0;
  if (use_dropout && opts.rng == nullptr) throw std::invalid_argument("forward: training with dropout needs an Rng");

  std::vector<std::size_t> blocks;
  std::size_t offset = 0;  // tokens of states before `first`
  for (std::size_t t = 0; t < first; ++t) offset += state_tokens(t);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::size_t expect = state_tokens(first + i);
    if (states[i].rows() != expect || states[i].cols() != cfg_.width) {
      throw ShapeError("forward: state " + std::to_string(first + i) + " is " + to_string(states[i].shape()) +
                       ", expected [" + std::to_string(expect) + ", " + std::to_string(cfg_.width) + "]");
    }
    blocks.push_back(expect);
  }
  const AttentionMask mask(blocks, cfg_.attention_mode);
  std::vector<std::size_t> positions;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b]; ++i) {
      positions.push_back(cfg_.attention_mode == AttentionMode::kMarkov ? i
                                                                        : offset + mask.block_offsets()[b] + i);
    }
  }

  ops::AttentionOptions attn_opts;
  attn_opts.probe = opts.probe;
  if (use_dropout) {
    attn_opts.dropout = cfg_.dropout;
    attn_opts.rng = opts.rng;
  }

  Var x = states.size() == 1 ? states[0] : ops::concat_rows(states);
  auto P = [&](std::size_t idx) { return g.parameter(params_[idx]); };
  for (const Layer& L : layers_) {
    Var h = ops::rms_norm(x, P(L.norm1));
    Var q = ops::rope(ops::linear(h, P(L.wq)), positions, cfg_.heads, kRopeBase);
    Var k = ops::rope(ops::linear(h, P(L.wk)), positions, cfg_.heads, kRopeBase);
    Var v = ops::linear(h, P(L.wv));
    Var a = ops::attention(q, k, v, mask, cfg_.heads, attn_opts);
    x = ops::add(x, ops::linear(a, P(L.wo)));

    Var m = ops::rms_norm(x, P(L.norm2));
    Var hidden = ops::mul(ops::silu(ops::linear(m, P(L.w_gate))), ops::linear(m, P(L.w_up)));
    if (use_dropout) hidden = ops::dropout(hidden, cfg_.dropout, *opts.rng);
    x = ops::add(x, ops::linear(hidden, P(L.w_down)));
    if (opts.hidden) opts.hidden->push_back(x.value());
  }
  Var logits = ops::linear(ops::rms_norm(x, P(final_norm_)), P(head_w_), P(head_b_));

  std::vector<Var> out;
  if (states.size() == 1) {
    out.push_back(logits);
  } else {
    for (std::size_t b = 0; b < blocks.size(); ++b) out.push_back(ops::slice_rows(logits, mask.block_offsets()[b], blocks[b]));
  }
  return out;
}

std::map<std::string, Tensor> Model::state() const {
  std::map<std::string, Tensor> out;
  for (const Parameter& p : params_) out[p.name] = p.value;
  return out;
}

void Model::load_state(const std::map<std::string, Tensor>& tensors) {
  for (Parameter& p : params_) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) throw ConfigError("model state is missing tensor " + p.name);
    if (it->second.shape() != p.value.shape()) {
      throw ShapeError("model tensor " + p.name + " has shape " + to_string(it->second.shape()) + ", expected " +
                       to_string(p.value.shape()));
    }
    p.value = it->second;
  }
}

}  // namespace msgen
