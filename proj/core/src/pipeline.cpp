// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>

#include "msgen/dataset.hpp"
#include "msgen/errors.hpp"
#include "msgen/image.hpp"
#include "msgen/metrics_log.hpp"

namespace msgen {
namespace {

constexpr const char* kMomentPrefix1 = "opt.m/";
constexpr const char* kMomentPrefix2 = "opt.v/";

// Keys that may differ between a checkpoint and the config resuming it.
bool resumable_key(const std::string& key) {
  return key == "train.steps" || key == "train.checkpoint_every" || key == "train.log_every" ||
         key.rfind("paths.", 0) == 0;
}

std::map<std::string, Tensor> with_prefix(const std::map<std::string, Tensor>& all, const std::string& prefix) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : all)
    if (name.rfind(prefix, 0) == 0) out.emplace(name, t);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ImageSet load_images(const RunConfig& cfg) {
  const auto items = load_dataset(cfg.paths.dataset);
  ImageSet set;
  for (const auto& item : items) {
    if (item.image.width != cfg.tokenizer.image_side || item.image.height != cfg.tokenizer.image_side ||
        item.image.channels != cfg.tokenizer.channels)
      throw ConfigError("dataset image " + item.filename + " is " + std::to_string(item.image.width) + "x" +
                        std::to_string(item.image.height) + "x" + std::to_string(item.image.channels) +
                        " but the tokenizer expects " + std::to_string(cfg.tokenizer.image_side) + "x" +
                        std::to_string(cfg.tokenizer.image_side) + "x" + std::to_string(cfg.tokenizer.channels));
    if (item.label < 0 || static_cast<std::size_t>(item.label) >= cfg.model.classes)
      throw ConfigError("dataset image " + item.filename + " has class " + std::to_string(item.label) +
                        " outside [0, model.classes)");
    set.images.push_back(image_to_tensor(item.image));
    set.labels.push_back(item.label);
  }
  if (set.images.empty()) throw IoError("dataset " + cfg.paths.dataset + " contains no images");
  return set;
}

Checkpoint tokenizer_checkpoint(const RunConfig& cfg, const VqTokenizer& tokenizer) {
  Checkpoint ckpt;
  ckpt.kind = "tokenizer";
  ckpt.config = config_entries(cfg);
  ckpt.tensors = tokenizer.state();
  return ckpt;
}

std::unique_ptr<VqTokenizer> tokenizer_from_checkpoint(const Checkpoint& ckpt) {
  const RunConfig cfg = config_from_entries(ckpt.config);
  auto tok = std::make_unique<VqTokenizer>(cfg.tokenizer_config(), cfg.schedule);
  tok->load_state(with_prefix(ckpt.tensors, "tok."));
  return tok;
}

TokenizerTrainLog run_tokenizer_training(const RunConfig& cfg) {
  const ImageSet set = load_images(cfg);
  VqTokenizer tok(cfg.tokenizer_config(), cfg.schedule);
  MetricsLog log(cfg.paths.metrics, false);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train_tokenizer(tok, set.images, [&](std::size_t step, double loss, double mse) {
    if (step % cfg.log_every == 0 || step + 1 == cfg.tokenizer.steps)
      log.write({{"step", step}, {"loss", loss}, {"mse", mse}, {"wall_time", seconds_since(t0)}});
  });
  log.write({{"final_mse", result.final_mse}, {"initial_mse", result.initial_mse}, {"codes_used", result.codes_used}});
  save_checkpoint(cfg.paths.tokenizer, tokenizer_checkpoint(cfg, tok));
  return result;
}

std::vector<TrainingExample> tokenize_images(const VqTokenizer& tokenizer, const ImageSet& set, std::size_t begin,
                                             std::size_t end) {
  std::vector<TrainingExample> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    out.push_back(prepare_example(tokenizer.tokenize(set.images[i]).pyramid, set.labels[i], tokenizer.codebook(),
                                  tokenizer.schedule(), tokenizer.config().kernel));
  return out;
}

DataSplit prepare_data(const RunConfig& cfg, const VqTokenizer& tokenizer) {
  const ImageSet set = load_images(cfg);
  const std::size_t n = set.images.size();
  const std::size_t held = n > cfg.eval_count ? cfg.eval_count : 0;
  DataSplit split;
  split.train = tokenize_images(tokenizer, set, 0, n - held);
  split.eval = tokenize_images(tokenizer, set, n - held, n);
  return split;
}

Checkpoint training_checkpoint(const RunConfig& cfg, const Model& model, const Trainer& trainer,
                               const VqTokenizer& tokenizer) {
  Checkpoint ckpt;
  ckpt.kind = "model";
  ckpt.step = trainer.steps_done();
  ckpt.rng_state = trainer.rng_state();
  ckpt.config = config_entries(cfg);
  ckpt.meta["optimizer_steps"] = std::to_string(trainer.optimizer().steps());
  ckpt.tensors = model.state();
  for (auto& [name, t] : tokenizer.state()) ckpt.tensors.emplace(name, t);
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace(kMomentPrefix1 + params[i].name, trainer.optimizer().first_moments()[i]);
    ckpt.tensors.emplace(kMomentPrefix2 + params[i].name, trainer.optimizer().second_moments()[i]);
  }
  return ckpt;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "model") throw IoError(path.string() + " is a " + ckpt.kind + " checkpoint, not a model");
  LoadedModel out;
  out.config = config_from_entries(ckpt.config);
  out.tokenizer = tokenizer_from_checkpoint(ckpt);
  out.model = std::make_unique<Model>(out.config.model_config());
  std::map<std::string, Tensor> own;
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind("tok.", 0) != 0 && name.rfind("opt.", 0) != 0) own.emplace(name, t);
  out.model->load_state(own);
  out.step = ckpt.step;
  return out;
}

TrainRunResult run_training(const RunConfig& cfg, const TrainRunOptions& opts) {
  const Checkpoint tok_ckpt = load_checkpoint(cfg.paths.tokenizer);
  if (tok_ckpt.kind != "tokenizer") throw IoError(cfg.paths.tokenizer + " is not a tokenizer checkpoint");
  const auto current = config_entries(cfg);
  std::vector<std::string> issues;
  for (const auto& [key, value] : config_entries(config_from_entries(tok_ckpt.config)))
    if ((key == "schedule.sizes" || key.rfind("tokenizer.", 0) == 0) && current.at(key) != value)
      issues.push_back(key + " = " + current.at(key) + " differs from the tokenizer checkpoint value " + value);
  if (!issues.empty()) throw ConfigError(issues);
  const auto tok = tokenizer_from_checkpoint(tok_ckpt);
  return run_training(cfg, *tok, prepare_data(cfg, *tok), opts);
}

TrainRunResult run_training(const RunConfig& cfg, const VqTokenizer& tokenizer, const DataSplit& data,
                            const TrainRunOptions& opts) {
  if (data.train.empty()) throw ConfigError("no training examples");
  Model model(cfg.model_config());
  Trainer trainer(model, cfg.train_config(), data.train);

  if (opts.resume) {
    const Checkpoint ckpt = load_checkpoint(cfg.paths.checkpoint);
    if (ckpt.kind != "model") throw IoError(cfg.paths.checkpoint + " is not a model checkpoint");
    std::vector<std::string> issues;
    const auto current = config_entries(cfg);
    for (const auto& [key, value] : config_entries(config_from_entries(ckpt.config)))
      if (!resumable_key(key) && current.count(key) && current.at(key) != value)
        issues.push_back(key + " = " + current.at(key) + " differs from the checkpoint value " + value);
    if (!issues.empty()) throw ConfigError(issues);
    std::map<std::string, Tensor> own;
    for (const auto& [name, t] : ckpt.tensors)
      if (name.rfind("tok.", 0) != 0 && name.rfind("opt.", 0) != 0) own.emplace(name, t);
    model.load_state(own);
    auto& opt = trainer.optimizer();
    const auto& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto m = ckpt.tensors.find(kMomentPrefix1 + params[i].name);
      const auto v = ckpt.tensors.find(kMomentPrefix2 + params[i].name);
      if (m == ckpt.tensors.end() || v == ckpt.tensors.end())
        throw IoError("checkpoint lacks optimizer state for " + params[i].name);
      opt.first_moments()[i] = m->second;
      opt.second_moments()[i] = v->second;
    }
    opt.set_steps(std::stoull(ckpt.meta.at("optimizer_steps")));
    trainer.restore(ckpt.step, ckpt.rng_state);
  }

  std::optional<MetricsLog> log;
  if (opts.save) log.emplace(cfg.paths.metrics, opts.resume);
  const auto save = [&] {
    if (opts.save) save_checkpoint(cfg.paths.checkpoint, training_checkpoint(cfg, model, trainer, tokenizer));
  };

  TrainRunResult result;
  result.start_step = trainer.steps_done();
  const std::uint64_t last = std::min<std::uint64_t>(cfg.train.steps, opts.stop_after.value_or(cfg.train.steps));
  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.steps_done() < last) {
    const std::uint64_t step = trainer.steps_done();
    const StepResult r = trainer.step();
    result.losses.push_back(r.loss);
    if (opts.on_step) opts.on_step(step, r);
    if (log && (step % cfg.log_every == 0 || step + 1 == last))
      log->write({{"step", step}, {"loss", r.loss}, {"per_scale", r.per_scale}, {"wall_time", seconds_since(t0)}});
    if (trainer.steps_done() % cfg.checkpoint_every == 0 && trainer.steps_done() < last) save();
  }
  result.end_step = trainer.steps_done();
  if (!data.eval.empty()) result.eval = evaluate_loss(model, data.eval);
  if (log && !data.eval.empty())
    log->write({{"step", result.end_step}, {"eval_loss", result.eval.loss}, {"eval_per_scale", result.eval.per_scale}});
  save();
  return result;
}

std::vector<AblationRow> ablate_window(const RunConfig& cfg, std::span<const std::size_t> windows,
                                       const VqTokenizer& tokenizer, const DataSplit& data) {
  std::vector<AblationRow> rows;
  for (std::size_t n : windows) {
    RunConfig run = cfg;
    run.model.window = n;
    if (auto issues = run.issues(); !issues.empty()) throw ConfigError(issues);
    TrainRunOptions opts;
    opts.save = false;
    const auto r = run_training(run, tokenizer, data, opts);
    AblationRow row;
    row.window = n;
    const std::size_t tail = std::max<std::size_t>(1, r.losses.size() / 10);
    for (std::size_t i = r.losses.size() - tail; i < r.losses.size(); ++i) row.final_train_loss += r.losses[i];
    row.final_train_loss /= static_cast<double>(tail);
    row.eval_loss = r.eval.loss;
    row.eval_per_scale = r.eval.per_scale;
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  const std::size_t scales = rows.empty() ? 0 : rows.front().eval_per_scale.size();
  out << "window,final_train_loss,eval_loss";
  for (std::size_t t = 0; t < scales; ++t) out << ",eval_scale_" << t + 1;
  out << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.window << ',' << r.final_train_loss << ',' << r.eval_loss;
    for (std::size_t t = 0; t < scales; ++t) out << ',' << (t < r.eval_per_scale.size() ? r.eval_per_scale[t] : NAN);
    out << '\n';
  }
}

}  // namespace msgen
