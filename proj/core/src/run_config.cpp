// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include "msgen/errors.hpp"

namespace msgen {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest decimal form that parses back to the same double.
std::string fmt_double(double v) {
  for (int precision = 15;; ++precision) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    if (precision >= 17 || std::stod(s.str()) == v) return s.str();
  }
}

std::optional<std::uint64_t> parse_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) return std::nullopt;
  return out;
}

std::optional<double> parse_double(const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) return std::nullopt;
    return d;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<bool> parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  return std::nullopt;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  // Returns an error message, or empty on success.
  std::function<std::string(RunConfig&, const std::string&)> set;
};

Field uint_field(std::function<std::size_t&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) -> std::string {
            const auto u = parse_uint(v);
            if (!u) return "expected a non-negative integer, got '" + v + "'";
            ref(c) = static_cast<std::size_t>(*u);
            return {};
          }};
}

Field u64_field(std::function<std::uint64_t&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) -> std::string {
            const auto u = parse_uint(v);
            if (!u) return "expected a non-negative integer, got '" + v + "'";
            ref(c) = *u;
            return {};
          }};
}

Field double_field(std::function<double&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const std::string& v) -> std::string {
            const auto d = parse_double(v);
            if (!d) return "expected a number, got '" + v + "'";
            ref(c) = *d;
            return {};
          }};
}

Field bool_field(std::function<bool&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref](RunConfig& c, const std::string& v) -> std::string {
            const auto b = parse_bool(v);
            if (!b) return "expected true or false, got '" + v + "'";
            ref(c) = *b;
            return {};
          }};
}

Field string_field(std::function<std::string&(RunConfig&)> ref) {
  return {[ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) -> std::string {
            if (v.empty()) return "expected a non-empty value";
            ref(c) = v;
            return {};
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", u64_field([](RunConfig& c) -> std::uint64_t& { return c.seed; })},
      {"schedule.sizes",
       {[](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.schedule.count(); ++i) s += (i ? "," : "") + std::to_string(c.schedule.size(i));
          return s;
        },
        [](RunConfig& c, const std::string& v) -> std::string {
          try {
            c.schedule = ScaleSchedule(parse_size_list(v));
          } catch (const std::exception& e) {
            return e.what();
          }
          return {};
        }}},
      {"model.depth", uint_field([](RunConfig& c) -> std::size_t& { return c.model.depth; })},
      {"model.width", uint_field([](RunConfig& c) -> std::size_t& { return c.model.width; })},
      {"model.heads", uint_field([](RunConfig& c) -> std::size_t& { return c.model.heads; })},
      {"model.dropout", double_field([](RunConfig& c) -> double& { return c.model.dropout; })},
      {"model.classes", uint_field([](RunConfig& c) -> std::size_t& { return c.model.classes; })},
      {"model.window", uint_field([](RunConfig& c) -> std::size_t& { return c.model.window; })},
      {"model.history", bool_field([](RunConfig& c) -> bool& { return c.model.history; })},
      {"model.kv_projection", bool_field([](RunConfig& c) -> bool& { return c.model.kv_projection; })},
      {"model.class_every_scale", bool_field([](RunConfig& c) -> bool& { return c.model.class_every_scale; })},
      {"model.paper_scaling", bool_field([](RunConfig& c) -> bool& { return c.model.paper_scaling; })},
      {"model.attention",
       {[](const RunConfig& c) { return std::string(to_string(c.model.attention_mode)); },
        [](RunConfig& c, const std::string& v) -> std::string {
          try {
            c.model.attention_mode = parse_attention_mode(v);
          } catch (const std::exception& e) {
            return e.what();
          }
          return {};
        }}},
      {"tokenizer.interpolation",
       {[](const RunConfig& c) { return std::string(to_string(c.tokenizer.kernel)); },
        [](RunConfig& c, const std::string& v) -> std::string {
          try {
            c.tokenizer.kernel = parse_interpolation(v);
          } catch (const std::exception& e) {
            return e.what();
          }
          return {};
        }}},
      {"tokenizer.image_side", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.image_side; })},
      {"tokenizer.channels", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.channels; })},
      {"tokenizer.d_code", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.d_code; })},
      {"tokenizer.vocab", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.vocab; })},
      {"tokenizer.hidden", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.hidden; })},
      {"tokenizer.zero_code", bool_field([](RunConfig& c) -> bool& { return c.tokenizer.zero_code; })},
      {"tokenizer.commitment", double_field([](RunConfig& c) -> double& { return c.tokenizer.commitment; })},
      {"tokenizer.ema_decay", double_field([](RunConfig& c) -> double& { return c.tokenizer.ema_decay; })},
      {"tokenizer.restart_dead", bool_field([](RunConfig& c) -> bool& { return c.tokenizer.restart_dead; })},
      {"tokenizer.dead_threshold", double_field([](RunConfig& c) -> double& { return c.tokenizer.dead_threshold; })},
      {"tokenizer.restart_every", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.restart_every; })},
      {"tokenizer.lr", double_field([](RunConfig& c) -> double& { return c.tokenizer.lr; })},
      {"tokenizer.steps", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.steps; })},
      {"tokenizer.batch", uint_field([](RunConfig& c) -> std::size_t& { return c.tokenizer.batch; })},
      {"train.lr", double_field([](RunConfig& c) -> double& { return c.train.lr; })},
      {"train.beta1", double_field([](RunConfig& c) -> double& { return c.train.beta1; })},
      {"train.beta2", double_field([](RunConfig& c) -> double& { return c.train.beta2; })},
      {"train.eps", double_field([](RunConfig& c) -> double& { return c.train.eps; })},
      {"train.weight_decay", double_field([](RunConfig& c) -> double& { return c.train.weight_decay; })},
      {"train.batch", uint_field([](RunConfig& c) -> std::size_t& { return c.train.batch; })},
      {"train.steps", uint_field([](RunConfig& c) -> std::size_t& { return c.train.steps; })},
      {"train.checkpoint_every", uint_field([](RunConfig& c) -> std::size_t& { return c.checkpoint_every; })},
      {"train.log_every", uint_field([](RunConfig& c) -> std::size_t& { return c.log_every; })},
      {"train.eval_count", uint_field([](RunConfig& c) -> std::size_t& { return c.eval_count; })},
      {"data.count", uint_field([](RunConfig& c) -> std::size_t& { return c.data_count; })},
      {"paths.dataset", string_field([](RunConfig& c) -> std::string& { return c.paths.dataset; })},
      {"paths.tokenizer", string_field([](RunConfig& c) -> std::string& { return c.paths.tokenizer; })},
      {"paths.checkpoint", string_field([](RunConfig& c) -> std::string& { return c.paths.checkpoint; })},
      {"paths.metrics", string_field([](RunConfig& c) -> std::string& { return c.paths.metrics; })},
  };
  return table;
}

RunConfig apply_entries(const std::vector<std::pair<std::string, std::string>>& entries,
                        std::vector<std::string>& issues) {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [key, value] = entries[i];
    const auto it = fields().find(key);
    if (it == fields().end()) {
      issues.push_back("unknown key '" + key + "'");
      continue;
    }
    if (!seen.emplace(key, i).second) {
      issues.push_back("duplicate key '" + key + "'");
      continue;
    }
    if (std::string err = it->second.set(cfg, value); !err.empty()) issues.push_back(key + ": " + err);
  }
  return cfg;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.schedule = schedule;
  m.vocab = tokenizer.vocab;
  m.d_code = tokenizer.d_code;
  m.kernel = tokenizer.kernel;
  m.seed = derive_seed(seed, 1);
  if (m.paper_scaling) m.apply_paper_scaling();
  return m;
}

TokenizerConfig RunConfig::tokenizer_config() const {
  TokenizerConfig t = tokenizer;
  t.seed = derive_seed(seed, 2);
  return t;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, 3);
  return t;
}

std::vector<std::string> RunConfig::issues() const {
  std::vector<std::string> out;
  for (auto& s : model_config().issues()) out.push_back(std::move(s));
  for (auto& s : tokenizer.issues(schedule)) out.push_back(std::move(s));
  for (auto& s : train.issues()) out.push_back(std::move(s));
  if (checkpoint_every == 0) out.push_back("train.checkpoint_every must be positive");
  if (log_every == 0) out.push_back("train.log_every must be positive");
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::string> issues;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back("line " + std::to_string(line_no) + ": expected `key = value`");
      continue;
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  RunConfig cfg = apply_entries(entries, issues);
  for (auto& s : cfg.issues()) issues.push_back(std::move(s));
  if (!issues.empty()) throw ConfigError(issues);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str());
}

std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
  return out;
}

RunConfig config_from_entries(const std::map<std::string, std::string>& entries) {
  std::vector<std::string> issues;
  RunConfig cfg = apply_entries({entries.begin(), entries.end()}, issues);
  for (auto& s : cfg.issues()) issues.push_back(std::move(s));
  if (!issues.empty()) throw ConfigError(issues);
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_entries(cfg)) out += key + " = " + value + "\n";
  return out;
}

}  // namespace msgen
