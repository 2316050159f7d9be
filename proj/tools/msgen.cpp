// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0
//
// msgen: dataset generation, tokenizer and model training, sampling, cost
// reports and diagnostics for Markovian next-scale image generation.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "msgen/cost_model.hpp"
#include "msgen/dataset.hpp"
#include "msgen/diagnostics.hpp"
#include "msgen/errors.hpp"
#include "msgen/image.hpp"
#include "msgen/pipeline.hpp"
#include "msgen/rng.hpp"
#include "msgen/sampler.hpp"

namespace {

using namespace msgen;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

// Writes to `path`, or stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    std::error_code ec;
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    file_.open(p);
    if (!file_) throw IoError("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  bool to_file() const { return file_.is_open(); }

 private:
  std::ofstream file_;
};

std::vector<std::size_t> size_list(const std::string& text) { return parse_size_list(text); }

std::vector<double> double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not a number in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

// ---------------------------------------------------------------------------

struct DatasetArgs {
  std::string out = "data/shapes";
  std::size_t count = 256;
  std::uint64_t seed = 0;
};

int cmd_dataset(const DatasetArgs& a) {
  write_dataset(a.out, make_shape_dataset(a.count, a.seed));
  std::cout << "wrote " << a.count << " images to " << a.out << "\n";
  return kExitOk;
}

int cmd_config(const std::string& check) {
  if (check.empty()) {
    std::cout << to_text(RunConfig{});
    return kExitOk;
  }
  load_run_config(check);
  std::cout << check << ": ok\n";
  return kExitOk;
}

int cmd_tokenizer_train(const std::string& config) {
  const RunConfig cfg = load_run_config(config);
  const auto log = run_tokenizer_training(cfg);
  std::cout << std::setprecision(6) << "reconstruction mse " << log.initial_mse << " -> " << log.final_mse << ", "
            << log.codes_used << "/" << cfg.tokenizer.vocab << " codes used\n"
            << "saved " << cfg.paths.tokenizer << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  bool resume = false;
  std::optional<std::uint64_t> stop_after;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  TrainRunOptions opts;
  opts.resume = a.resume;
  opts.stop_after = a.stop_after;
  if (!a.quiet) {
    opts.on_step = [&](std::uint64_t step, const StepResult& r) {
      if (step % cfg.log_every == 0) std::cerr << "step " << step << " loss " << std::setprecision(6) << r.loss << "\n";
    };
  }
  const auto r = run_training(cfg, opts);
  std::cout << "trained steps " << r.start_step << ".." << r.end_step;
  if (!r.losses.empty()) std::cout << ", last loss " << std::setprecision(6) << r.losses.back();
  std::cout << ", eval loss " << r.eval.loss << "\nsaved " << cfg.paths.checkpoint << "\n";
  return kExitOk;
}

struct SampleArgs {
  std::string checkpoint;
  int label = 0;
  std::size_t count = 8;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::optional<std::size_t> top_k;
  std::string out = "samples";
};

int cmd_sample(const SampleArgs& a) {
  const auto loaded = load_model(a.checkpoint);
  if (a.label < 0 || static_cast<std::size_t>(a.label) >= loaded.config.model.classes)
    throw ConfigError("--class must lie in [0, " + std::to_string(loaded.config.model.classes) + ")");
  SampleOptions opts;
  opts.temperature = a.temperature;
  opts.top_k = a.top_k;
  std::vector<int> labels(a.count, a.label);
  std::vector<std::uint64_t> seeds(a.count);
  for (std::size_t i = 0; i < a.count; ++i) seeds[i] = derive_seed(a.seed, i);
  const auto results = generate_batch(*loaded.model, loaded.tokenizer->codebook(), labels, seeds, opts,
                                      loaded.tokenizer.get());
  std::filesystem::create_directories(a.out);
  const std::size_t side = loaded.config.tokenizer.image_side;
  for (std::size_t i = 0; i < results.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "class%d_%04zu.%s", a.label, i, loaded.config.tokenizer.channels == 1 ? "pgm" : "ppm");
    write_pnm(std::filesystem::path(a.out) / name, tensor_to_image(*results[i].image, side));
  }
  std::cout << "wrote " << results.size() << " images to " << a.out << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::size_t depth = 16;
  std::string resolutions = "256,512,1024";
  std::size_t batch = 25;
  std::string mode = "both";
  std::size_t window = 3;
  std::size_t bytes = 2;
  std::string csv;
  std::string steps_csv;
};

int cmd_bench(const BenchArgs& a) {
  ModelConfig cfg;
  cfg.depth = a.depth;
  cfg.apply_paper_scaling();
  cfg.window = a.window;
  if (a.mode != "both" && a.mode != "markov" && a.mode != "full-context")
    throw ConfigError("--mode must be markov, full-context or both");
  std::vector<ResolutionPreset> presets;
  const auto all = default_presets();
  for (std::size_t side : size_list(a.resolutions)) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.image_side == side; });
    if (it == all.end()) throw ConfigError("no preset for resolution " + std::to_string(side) + " (use 256, 512 or 1024)");
    presets.push_back(*it);
  }
  std::vector<CostReport> reports;
  for (const auto& p : presets) {
    for (AttentionMode m : {AttentionMode::kFullContext, AttentionMode::kMarkov}) {
      if (a.mode != "both" && a.mode != to_string(m)) continue;
      reports.push_back(memory_estimate(cfg, p.schedule, m, a.batch, a.bytes));
      reports.back().name = p.name;
    }
  }
  Output steps(a.steps_csv);
  if (steps.to_file()) write_report_csv(steps.stream(), reports);
  for (const auto& r : reports) {
    std::cout << "[" << r.name << "] ";
    write_report_text(std::cout, r);
  }
  if (a.mode == "both") {
    const auto cmp = compare(cfg, presets, a.batch, a.bytes);
    Output out(a.csv);
    if (out.to_file()) write_comparison_csv(out.stream(), cmp);
    write_comparison_text(std::cout, cmp);
  } else if (!a.csv.empty()) {
    Output out(a.csv);
    write_report_csv(out.stream(), reports);
  }
  return kExitOk;
}

struct AblateArgs {
  std::string config;
  std::string windows = "1,2,3,4";
  std::string csv;
};

int cmd_ablate(const AblateArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const auto windows = size_list(a.windows);
  const auto tok = tokenizer_from_checkpoint(load_checkpoint(cfg.paths.tokenizer));
  const auto data = prepare_data(cfg, *tok);
  const auto rows = ablate_window(cfg, windows, *tok, data);
  Output out(a.csv);
  write_ablation_csv(out.stream(), rows);
  return kExitOk;
}

struct RfaArgs {
  std::string checkpoint;
  int label = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> layer;
  std::string csv;
};

int cmd_rfa(const RfaArgs& a) {
  const auto loaded = load_model(a.checkpoint);
  RfaOptions opts;
  opts.label = a.label;
  opts.seed = a.seed;
  opts.layer = a.layer;
  const auto m = rfa_matrix(*loaded.model, loaded.tokenizer->codebook(), opts);
  Output out(a.csv);
  auto& s = out.stream();
  s << "scale";
  for (std::size_t k = 0; k < m.size(); ++k) s << ",input_" << k + 1;
  s << '\n' << std::setprecision(10);
  for (std::size_t t = 0; t < m.size(); ++t) {
    s << t + 1;
    for (double v : m[t]) s << ',' << v;
    s << '\n';
  }
  return kExitOk;
}

struct PerturbArgs {
  std::string checkpoint;
  std::string scales = "1";
  std::string sigmas = "0,0.5,1";
  std::size_t seeds = 4;
  std::uint64_t seed = 0;
  int label = 0;
  std::string csv;
};

int cmd_perturb(const PerturbArgs& a) {
  const auto loaded = load_model(a.checkpoint);
  Output out(a.csv);
  auto& s = out.stream();
  s << "inject_scale,sigma,mse,l1\n" << std::setprecision(10);
  for (std::size_t scale : size_list(a.scales)) {
    for (double sigma : double_list(a.sigmas)) {
      PerturbOptions opts;
      opts.inject_scale = scale;
      opts.sigma = sigma;
      opts.label = a.label;
      opts.seeds.clear();
      for (std::size_t i = 0; i < a.seeds; ++i) opts.seeds.push_back(derive_seed(a.seed, i));
      const auto m = perturb_experiment(*loaded.model, loaded.tokenizer->codebook(), opts, loaded.tokenizer.get());
      s << scale << ',' << sigma << ',' << m.mse << ',' << m.l1 << '\n';
    }
  }
  return kExitOk;
}

// Reads the first two numeric columns of a CSV file; a non-numeric first line is a header.
void read_xy(const std::string& path, std::vector<double>& xs, std::vector<double>& ys) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double x = 0.0, y = 0.0;
    if (!(row >> x >> y)) {
      if (line_no == 1) continue;
      throw IoError(path + ":" + std::to_string(line_no) + ": expected two numeric columns");
    }
    xs.push_back(x);
    ys.push_back(y);
  }
}

int cmd_scaling(const std::string& input, const std::string& csv) {
  std::vector<double> xs, ys;
  read_xy(input, xs, ys);
  const auto fit = power_law_fit(xs, ys);
  Output out(csv);
  out.stream() << "a,b,r2,points\n" << std::setprecision(17) << fit.a << ',' << fit.b << ',' << fit.r2 << ','
               << xs.size() << '\n';
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Markovian next-scale image generation toolkit", "msgen"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "msgen 0.1.0");

  auto* config = app.add_subcommand("config", "Print the default run config, or validate one");
  std::string config_check;
  config->add_option("--check", config_check, "Config file to validate");

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Write the procedural 8-class shape dataset");
  dataset->add_option("--out", ds.out, "Output directory")->capture_default_str();
  dataset->add_option("--count", ds.count, "Number of images")->capture_default_str();
  dataset->add_option("--seed", ds.seed, "Random seed")->capture_default_str();

  std::string tok_config;
  auto* tok = app.add_subcommand("tokenizer-train", "Train the multi-scale VQ tokenizer");
  tok->add_option("--config", tok_config, "Run config file")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the scale-prediction model");
  train->add_option("--config", tr.config, "Run config file")->required();
  train->add_flag("--resume", tr.resume, "Continue from paths.checkpoint");
  train->add_option("--stop-after", tr.stop_after, "Stop once this many total steps are done");
  train->add_flag("--quiet", tr.quiet, "Suppress per-step progress");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Generate images from a model checkpoint");
  sample->add_option("--checkpoint", sa.checkpoint, "Model checkpoint")->required();
  sample->add_option("--class", sa.label, "Class label")->capture_default_str();
  sample->add_option("--count", sa.count, "Number of images")->capture_default_str();
  sample->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  sample->add_option("--temperature", sa.temperature, "Softmax temperature; 0 is greedy")->capture_default_str();
  sample->add_option("--top-k", sa.top_k, "Keep the k most likely codes (default: all)");
  sample->add_option("--out", sa.out, "Output directory")->capture_default_str();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Analytic memory and compute comparison");
  bench->add_option("--depth", ba.depth, "Depth; width, heads and dropout follow it")->capture_default_str();
  bench->add_option("--resolutions", ba.resolutions, "Comma-separated presets: 256, 512, 1024")->capture_default_str();
  bench->add_option("--batch", ba.batch, "Batch size")->capture_default_str();
  bench->add_option("--mode", ba.mode, "markov, full-context or both")->capture_default_str();
  bench->add_option("--window", ba.window, "History window N")->capture_default_str();
  bench->add_option("--bytes", ba.bytes, "Bytes per element")->capture_default_str();
  bench->add_option("--csv", ba.csv, "Comparison CSV (per-step CSV for a single mode)");
  bench->add_option("--steps-csv", ba.steps_csv, "Per-step CSV");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate-window", "Train and evaluate one model per window size");
  ablate->add_option("--config", aa.config, "Run config file")->required();
  ablate->add_option("--windows", aa.windows, "Comma-separated window sizes")->capture_default_str();
  ablate->add_option("--csv", aa.csv, "Output CSV (default stdout)");

  auto* analyze = app.add_subcommand("analyze", "Diagnostics");
  analyze->require_subcommand(1);
  RfaArgs ra;
  auto* rfa = analyze->add_subcommand("rfa", "Residual-feature alignment matrix");
  rfa->add_option("--checkpoint", ra.checkpoint, "Model checkpoint")->required();
  rfa->add_option("--class", ra.label, "Class label")->capture_default_str();
  rfa->add_option("--seed", ra.seed, "Sampling seed")->capture_default_str();
  rfa->add_option("--layer", ra.layer, "Block index (default: last)");
  rfa->add_option("--csv", ra.csv, "Output CSV (default stdout)");
  PerturbArgs pa;
  auto* perturb = analyze->add_subcommand("perturb", "Noise injection into an embedded scale");
  perturb->add_option("--checkpoint", pa.checkpoint, "Model checkpoint")->required();
  perturb->add_option("--scales", pa.scales, "Comma-separated 1-based injection scales")->capture_default_str();
  perturb->add_option("--sigmas", pa.sigmas, "Comma-separated noise levels")->capture_default_str();
  perturb->add_option("--seeds", pa.seeds, "Samples per setting")->capture_default_str();
  perturb->add_option("--seed", pa.seed, "Base seed")->capture_default_str();
  perturb->add_option("--class", pa.label, "Class label")->capture_default_str();
  perturb->add_option("--csv", pa.csv, "Output CSV (default stdout)");
  std::string scaling_input, scaling_csv;
  auto* scaling = analyze->add_subcommand("scaling", "Power-law fit y = a x^b of a two-column CSV");
  scaling->add_option("--input", scaling_input, "CSV with x,y columns")->required();
  scaling->add_option("--csv", scaling_csv, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*config) return cmd_config(config_check);
  if (*dataset) return cmd_dataset(ds);
  if (*tok) return cmd_tokenizer_train(tok_config);
  if (*train) return cmd_train(tr);
  if (*sample) return cmd_sample(sa);
  if (*bench) return cmd_bench(ba);
  if (*ablate) return cmd_ablate(aa);
  if (*rfa) return cmd_rfa(ra);
  if (*perturb) return cmd_perturb(pa);
  if (*scaling) return cmd_scaling(scaling_input, scaling_csv);
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& issue : e.issues()) std::cerr << "  - " << issue << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
