// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/trainer.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "msgen/errors.hpp"
#include "msgen/ops.hpp"
#include "msgen/parallel.hpp"

namespace msgen {

TrainingExample prepare_example(ResidualPyramid pyramid, int label, const Codebook& codebook,
                                const ScaleSchedule& schedule, Interpolation kernel) {
  TrainingExample ex;
  const auto f_hats = accumulate_pyramid(pyramid, codebook, schedule, kernel);
  for (std::size_t t = 1; t < schedule.count(); ++t) {
    ex.scale_inputs.push_back(resample(f_hats[t - 1], schedule.size(t), kernel));
  }
  ex.pyramid = std::move(pyramid);
  ex.label = label;
  return ex;
}

TeacherInputs build_teacher_inputs(Graph& g, const Model& model, const TrainingExample& ex) {
  const ModelConfig& cfg = model.config();
  const ScaleSchedule& sch = cfg.schedule;
  if (ex.pyramid.count() != sch.count() || ex.scale_inputs.size() + 1 != sch.count()) {
    throw ConfigError("teacher inputs: example has " + std::to_string(ex.pyramid.count()) +
                      " scales, schedule " + sch.to_string() + " has " + std::to_string(sch.count()));
  }
  ex.pyramid.validate(sch, cfg.vocab);
  const ParameterStore& ps = model.params();
  const MarkovStateModule& hist = model.history();

  TeacherInputs out;
  out.embedded.push_back(hist.sos(g, ps, ex.label));
  for (std::size_t t = 1; t < sch.count(); ++t) {
    out.embedded.push_back(hist.embed(g, ps, ex.scale_inputs[t - 1], ex.label));
  }

  out.states.push_back(hist.assemble(g, ps, out.embedded[0], g.constant(Tensor::matrix(1, cfg.width))));
  out.windows.emplace_back();
  SlidingWindow<Var> window(cfg.window, cfg.width);
  std::deque<std::size_t> ids;  // mirrors the window by embedded index
  for (std::size_t t = 1; t < sch.count(); ++t) {
    window.push(out.embedded[t - 1]);
    if (ids.size() == cfg.window) ids.pop_front();
    ids.push_back(t - 1);
    const auto items = window.snapshot();
    out.states.push_back(hist.assemble(g, ps, out.embedded[t], hist.pool(g, ps, items)));
    out.windows.emplace_back(ids.begin(), ids.end());
  }
  return out;
}

TeacherInputs build_teacher_inputs(Graph& g, const Model& model, const ResidualPyramid& pyramid,
                                   const Codebook& codebook, int label) {
  return build_teacher_inputs(g, model,
                              prepare_example(pyramid, label, codebook, model.config().schedule, model.config().kernel));
}

Var sequence_loss(std::span<const Var> logits, const ResidualPyramid& pyramid, std::vector<double>* per_scale) {
  if (logits.size() != pyramid.count()) {
    throw ShapeError("sequence_loss: " + std::to_string(logits.size()) + " logit blocks for " +
                     std::to_string(pyramid.count()) + " scales");
  }
  if (per_scale) per_scale->clear();
  Var total;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (logits[t].rows() != pyramid.grids[t].size()) {
      throw ShapeError("sequence_loss: scale " + std::to_string(t) + " logits " + to_string(logits[t].shape()) +
                       " for " + std::to_string(pyramid.grids[t].size()) + " targets");
    }
    Var ce = ops::cross_entropy(logits[t], pyramid.grids[t]);
    if (per_scale) per_scale->push_back(ce.value().item());
    total = t == 0 ? ce : ops::add(total, ce);
  }
  return total;
}

std::vector<std::string> TrainConfig::issues() const {
  std::vector<std::string> out;
  if (!(lr > 0.0) || !std::isfinite(lr)) out.push_back("train.lr must be finite and positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) out.push_back("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("train.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) out.push_back("train.eps must be positive");
  if (!(weight_decay >= 0.0)) out.push_back("train.weight_decay must be non-negative");
  if (batch == 0) out.push_back("train.batch must be positive");
  return out;
}

namespace {

struct ItemResult {
  std::unique_ptr<Graph> graph;
  double loss = 0.0;
  std::vector<double> per_scale;
};

ItemResult run_item(const Model& model, const TrainingExample& ex, bool backward, Rng* rng) {
  ItemResult r;
  r.graph = std::make_unique<Graph>(backward);
  Graph& g = *r.graph;
  const TeacherInputs in = build_teacher_inputs(g, model, ex);
  ForwardOptions fo;
  fo.training = rng != nullptr;
  fo.rng = rng;
  const auto logits = model.forward(g, in.states, 0, fo);
  Var loss = sequence_loss(logits, ex.pyramid, &r.per_scale);
  r.loss = loss.value().item();
  if (backward && std::isfinite(r.loss)) g.backward(loss);
  return r;
}

StepResult reduce(const std::vector<ItemResult>& items) {
  StepResult out;
  out.per_scale.assign(items.front().per_scale.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(items.size());
  for (const auto& r : items) {
    out.loss += r.loss * inv;
    for (std::size_t t = 0; t < r.per_scale.size(); ++t) out.per_scale[t] += r.per_scale[t] * inv;
  }
  return out;
}

}  // namespace

StepResult train_step(Model& model, AdamW& optimizer, std::span<const TrainingExample* const> batch,
                      std::uint64_t noise_seed, bool training) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<ItemResult> items(batch.size());
  const bool dropout = training && model.config().dropout > 0.0;
  parallel_for(batch.size(), [&](std::size_t i) {
    Rng rng(derive_seed(noise_seed, i));
    items[i] = run_item(model, *batch[i], true, dropout ? &rng : nullptr);
  });
  StepResult res = reduce(items);
  if (!std::isfinite(res.loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss " << res.loss << "; per-scale:";
    for (double v : res.per_scale) msg << ' ' << v;
    throw NumericError(msg.str());
  }
  ParameterStore& ps = model.params();
  ps.zero_grad();
  for (const auto& r : items) r.graph->accumulate_into(ps, 1.0 / static_cast<double>(items.size()));
  optimizer.step(ps);
  return res;
}

StepResult evaluate_loss(const Model& model, std::span<const TrainingExample> examples) {
  if (examples.empty()) throw ConfigError("evaluate_loss: no examples");
  std::vector<ItemResult> items(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    items[i] = run_item(model, examples[i], false, nullptr);
    items[i].graph.reset();
  });
  return reduce(items);
}

Trainer::Trainer(Model& model, TrainConfig cfg, std::vector<TrainingExample> data)
    : model_(model), cfg_(cfg), data_(std::move(data)), rng_(derive_seed(cfg.seed, 0x7e)) {
  if (auto v = cfg_.issues(); !v.empty()) throw ConfigError(v);
  if (data_.empty()) throw ConfigError("training needs at least one example");
  opt_ = AdamW(model_.params(), cfg_.optimizer());
}

StepResult Trainer::step() {
  std::vector<const TrainingExample*> batch;
  for (std::size_t i = 0; i < cfg_.batch; ++i) batch.push_back(&data_[rng_.below(data_.size())]);
  const StepResult r = train_step(model_, opt_, batch, derive_seed(cfg_.seed, 0xd0, step_));
  ++step_;
  return r;
}

void Trainer::restore(std::uint64_t step, const std::string& rng_state) {
  step_ = step;
  rng_.set_state(rng_state);
}

}  // namespace msgen
