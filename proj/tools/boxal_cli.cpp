// boxal: command line front end for the box-level active learning simulator.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "boxal/acquisition.hpp"
#include "boxal/config.hpp"
#include "boxal/error.hpp"
#include "boxal/io.hpp"
#include "boxal/simulator.hpp"

namespace fs = std::filesystem;
using namespace boxal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_strategy) {
  cmd->add_option("--config", opts.config_path, "experiment configuration (JSON)");
  cmd->add_option("--seed", opts.seed, "override the run seed");
  if (with_strategy) cmd->add_option("--strategy", opts.strategy, "override the selection strategy");
  cmd->add_option("--out", opts.out, "output path");
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  if (opts.seed) cfg.seeds = {*opts.seed};
  if (opts.strategy) cfg.strategy = strategy_from_string(*opts.strategy);
  if (opts.out) cfg.output_dir = *opts.out;
  cfg.validate();
  return cfg;
}

std::string run_stem(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fmt::format("{}_{}_seed{}", to_string(cfg.strategy), to_string(cfg.pseudo_mode), seed);
}

fs::path checkpoint_path(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                         int cycle) {
  return dir / fmt::format("{}_cycle{}.ckpt.json", run_stem(cfg, seed), cycle);
}

int cmd_gen(const CommonOptions& opts) {
  ExperimentConfig cfg = resolve_config(opts);
  DatasetConfig dc = cfg.dataset;
  if (opts.seed) dc.seed = *opts.seed;
  const Dataset ds = generate_dataset(dc);
  const fs::path out = opts.out ? fs::path(*opts.out) : fs::path("dataset.json");
  write_coco(ds, out);
  std::cout << fmt::format("wrote {} images, {} objects to {}\n", ds.images.size(),
                           ds.num_objects(), out.string());
  return kExitOk;
}

int cmd_run(const CommonOptions& opts) {
  const ExperimentConfig cfg = resolve_config(opts);
  const fs::path dir = cfg.output_dir;
  for (std::uint64_t seed : cfg.seeds) {
    const Experiment exp(cfg, seed);
    const std::string hash = config_hash(cfg, seed);
    ALState state = exp.initial_state();
    save_checkpoint(state, hash, checkpoint_path(dir, cfg, seed, state.cycle));
    std::vector<CycleReport> reports;
    while (!exp.finished(state)) {
      auto result = exp.run_cycle(state);
      state = std::move(result.state);
      save_checkpoint(state, hash, checkpoint_path(dir, cfg, seed, state.cycle));
      std::cout << fmt::format("seed {} cycle {}: spent {}, f1 {:.4f}\n", seed, state.cycle,
                               result.report.budget_spent, result.report.detection_quality);
      reports.push_back(std::move(result.report));
    }
    if (!reports.empty()) write_report(reports, dir / (run_stem(cfg, seed) + ".csv"));
  }
  return kExitOk;
}

int cmd_cycle(const CommonOptions& opts, const std::string& checkpoint) {
  const ExperimentConfig cfg = resolve_config(opts);
  const auto raw = parse_json_text(read_text_file(checkpoint), checkpoint);
  std::uint64_t seed = 0;
  try {
    seed = raw.at("state").at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(checkpoint + ": not a checkpoint (" + e.what() + ")");
  }
  if (opts.seed && *opts.seed != seed) {
    throw DataError(fmt::format("{}: checkpoint belongs to seed {}, not {}", checkpoint, seed, *opts.seed));
  }
  const std::string hash = config_hash(cfg, seed);
  const ALState state = load_checkpoint(checkpoint, hash);
  const Experiment exp(cfg, seed);
  if (state.labelled.size() != exp.dataset().images.size()) {
    throw DataError(checkpoint + ": checkpoint does not match the configured dataset");
  }
  if (exp.finished(state)) throw DataError(checkpoint + ": no annotation budget left");
  auto result = exp.run_cycle(state);
  const fs::path dir = cfg.output_dir;
  const fs::path next = checkpoint_path(dir, cfg, seed, result.state.cycle);
  save_checkpoint(result.state, hash, next);
  const std::vector<CycleReport> reports{result.report};
  write_report(reports, dir / fmt::format("{}_cycle{}.csv", run_stem(cfg, seed), result.state.cycle));
  std::cout << fmt::format("cycle {} done, checkpoint {}\n", result.state.cycle, next.string());
  return kExitOk;
}

int cmd_score(const CommonOptions& opts, const std::string& detections, const std::string& labelled) {
  const ExperimentConfig cfg = resolve_config(opts);
  Dataset gt;
  if (!labelled.empty()) gt = load_coco(labelled);
  const auto dets = parse_json_text(read_text_file(detections), detections);
  const auto rows = score_detections(dets, gt, cfg);
  const std::string csv = format_scores_csv(rows);
  if (opts.out) {
    write_text_file(*opts.out, csv);
  } else {
    std::cout << csv;
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::optional<std::string>& out) {
  std::vector<std::string> texts;
  texts.reserve(inputs.size());
  for (const auto& p : inputs) texts.push_back(read_text_file(p));
  const std::string summary = summarize_reports(texts);
  if (out) {
    write_text_file(*out, summary);
  } else {
    std::cout << summary;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box-level active learning simulator"};
  app.require_subcommand(1);

  CommonOptions gen_opts, run_opts, cycle_opts, score_opts;
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset as COCO JSON");
  add_common(gen, gen_opts, false);

  auto* run = app.add_subcommand("run", "run every configured seed to the end");
  add_common(run, run_opts, true);

  std::string checkpoint;
  auto* cycle = app.add_subcommand("cycle", "resume one cycle from a checkpoint");
  add_common(cycle, cycle_opts, true);
  cycle->add_option("--checkpoint", checkpoint, "checkpoint to resume from")->required();

  std::string detections, labelled;
  auto* score = app.add_subcommand("score", "score a detections file, one CSV row per box");
  add_common(score, score_opts, true);
  score->add_option("--detections", detections, "detections JSON")->required();
  score->add_option("--labelled", labelled, "labelled set (COCO JSON)");

  std::vector<std::string> inputs;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "median and IQR across report CSVs");
  report->add_option("inputs", inputs, "report CSV files")->required();
  report->add_option("--out", report_out, "summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_opts);
    if (*run) return cmd_run(run_opts);
    if (*cycle) return cmd_cycle(cycle_opts, checkpoint);
    if (*score) return cmd_score(score_opts, detections, labelled);
    if (*report) return cmd_report(inputs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
