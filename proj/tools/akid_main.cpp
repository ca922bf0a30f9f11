#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "akid/experiment.hpp"
#include "akid/observer.hpp"
#include "akid/tuner.hpp"

namespace fs = std::filesystem;
using namespace akid;

namespace {

struct TrainArgs {
  std::string config;
  std::string log_dir;
  std::optional<std::uint64_t> seed;
  bool offline = false;
};

// Splits leftover "--a.b=value" / "--a.b value" arguments into overrides.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) throw ConfigError("unexpected argument: " + arg);
    const std::string body = arg.substr(2);
    const std::size_t eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw ConfigError("override " + arg + " has no value");
    }
    if (out.back().first.find('.') == std::string::npos && out.back().first != "seed") {
      throw ConfigError("override --" + out.back().first + ": expected --section.key=value");
    }
  }
  return out;
}

Json load_document(const TrainArgs& args, const std::vector<std::string>& extras) {
  Json doc = parse_json_file(args.config);
  for (const auto& [key, value] : parse_overrides(extras)) apply_override(doc, key, value);
  if (args.seed) doc["seed"] = *args.seed;
  if (!args.log_dir.empty()) apply_override(doc, "kid.log_dir", Json(args.log_dir).dump());
  if (args.offline) apply_override(doc, "source.offline", "true");
  return doc;
}

void print_metrics(const Metrics& m) {
  std::printf("clock %llu  train loss %.6f  train accuracy %.4f", static_cast<unsigned long long>(m.clock), m.train_loss,
              m.train_accuracy);
  if (m.val) std::printf("  val loss %.6f  val accuracy %.4f", m.val->loss, m.val->accuracy);
  std::printf("\n");
}

int cmd_train(const TrainArgs& args, const std::vector<std::string>& extras) {
  const Json doc = load_document(args, extras);
  const ExperimentConfig config = ExperimentConfig::from_json(doc);
  auto kid = build_kid(config);
  kid->setup();
  const auto t0 = std::chrono::steady_clock::now();
  const Metrics m = kid->practice();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print_metrics(m);
  std::printf("%llu steps in %.1f s\n", static_cast<unsigned long long>(m.clock), seconds);
  if (!config.kid.log_dir.empty()) {
    std::ofstream(fs::path(config.kid.log_dir) / "config.json") << config.to_json().dump(2) << '\n';
    std::ofstream(fs::path(config.kid.log_dir) / "metrics.json") << metrics_json(m).dump(2) << '\n';
    std::printf("wrote %s\n", config.kid.log_dir.c_str());
  }
  return 0;
}

struct TuneArgs {
  std::string spec;
  std::string results;
  std::string run_id;
  std::string mode = "inprocess";
  bool offline = false;
};

int cmd_tune(const TuneArgs& args, const std::string& self) {
  TuneSpec spec = TuneSpec::from_file(args.spec);
  if (!args.results.empty()) spec.results_dir = args.results;
  std::string run_id = args.run_id;
  if (run_id.empty()) {
    run_id = "run-" + std::to_string(std::chrono::duration_cast<std::chrono::seconds>(
                                         std::chrono::system_clock::now().time_since_epoch())
                                         .count());
  }
  JobRunner runner;
  if (args.mode == "inprocess") {
    runner = in_process_runner(args.offline);
  } else if (args.mode == "subprocess") {
    runner = subprocess_runner(fs::absolute(self).string(), args.offline);
  } else {
    throw ConfigError("--mode: expected inprocess or subprocess, got " + args.mode);
  }
  const TuneReport report = run(spec, runner, run_id);
  const fs::path dir = fs::path(spec.results_dir) / run_id;
  write_report(report, dir.string());

  std::printf("%-14s %4s %-7s %9s %11s %11s %8s\n", "job", "slot", "status", "wall(s)", "train_loss", "val_loss",
              "val_acc");
  auto num = [](const Json& m, const char* key) {
    return m.contains(key) ? std::to_string(m[key].get<double>()) : std::string("-");
  };
  for (const auto& j : report.jobs) {
    std::printf("%-14s %4ld %-7s %9.2f %11s %11s %8s\n", j.id.c_str(), j.slot, j.status.c_str(), j.wall_time,
                num(j.metrics, "train_loss").c_str(), num(j.metrics, "val_loss").c_str(),
                num(j.metrics, "val_accuracy").c_str());
    if (!j.error.empty()) std::printf("  error: %s\n", j.error.c_str());
  }
  std::printf("%zu jobs on %zu slots, peak concurrency %zu; report in %s\n", report.jobs.size(), report.num_slots,
              report.peak_concurrency, dir.string().c_str());
  return report.all_ok() ? 0 : 3;
}

struct VisualizeArgs {
  std::string config;
  std::string checkpoint;
  std::string what = "filters";
  std::string out = "visualize";
  bool offline = false;
};

int cmd_visualize(const VisualizeArgs& args) {
  if (args.what != "filters" && args.what != "activations" && args.what != "graph") {
    throw ConfigError("--what: expected filters, activations or graph, got " + args.what);
  }
  Json doc = parse_json_file(args.config);
  if (args.offline) apply_override(doc, "source.offline", "true");
  const ExperimentConfig config = ExperimentConfig::from_json(doc);
  fs::create_directories(args.out);

  if (args.what == "graph") {
    auto brain = Brain::from_config(config.brain, "brain");
    const fs::path path = fs::path(args.out) / (brain->name() + ".dot");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << export_dot(*brain);
    std::printf("wrote %s\n", path.string().c_str());
    return 0;
  }

  if (args.checkpoint.empty()) throw ConfigError("--checkpoint is required for --what " + args.what);
  if (!fs::exists(args.checkpoint)) throw IoError("checkpoint not found: " + args.checkpoint);
  ExperimentConfig quiet = config;
  quiet.kid.log_dir.clear();
  auto kid = build_kid(quiet);
  kid->setup();
  kid->load_checkpoint(args.checkpoint);
  if (args.what == "filters") {
    for (const auto& path : visualize_filters(kid->brain(), args.out, kid->clock())) std::printf("wrote %s\n", path.c_str());
  } else {
    const Batch batch = kid->sensor().val_batches() > 0 ? kid->sensor().val_batch(0) : kid->sensor().train_batch(0);
    const auto counts = visualize_activation(kid->brain(), {batch.data, batch.labels}, args.out, kid->clock());
    for (const auto& [layer, channels] : counts) std::printf("%s: %zu channels\n", layer.c_str(), channels);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"akid: block-based neural network training"};
  app.require_subcommand(1);

  TrainArgs train;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one experiment config; extra --section.key=value flags override it");
  train_cmd->add_option("--config", train.config, "experiment JSON")->required();
  train_cmd->add_option("--log-dir", train.log_dir, "summaries, checkpoint and metrics.json go here");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "global seed");
  train_cmd->add_flag("--offline", train.offline, "never download; the dataset cache must exist");
  train_cmd->allow_extras();

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Run every job of a tune spec and print the report table");
  tune_cmd->add_option("spec", tune.spec, "tune spec JSON")->required();
  tune_cmd->add_option("--results", tune.results, "overrides the spec's results_dir");
  tune_cmd->add_option("--run-id", tune.run_id, "directory name under results (default: run-<unix time>)");
  tune_cmd->add_option("--mode", tune.mode, "inprocess or subprocess");
  tune_cmd->add_flag("--offline", tune.offline, "never download datasets");

  VisualizeArgs vis;
  auto* vis_cmd = app.add_subcommand("visualize", "Render filters, activations or the block graph");
  vis_cmd->add_option("--config", vis.config, "experiment JSON")->required();
  vis_cmd->add_option("--checkpoint", vis.checkpoint, "checkpoint.akck (filters and activations)");
  vis_cmd->add_option("--what", vis.what, "filters, activations or graph");
  vis_cmd->add_option("--out", vis.out, "output directory");
  vis_cmd->add_flag("--offline", vis.offline, "never download datasets");

  VisualizeArgs graph;
  graph.what = "graph";
  auto* graph_cmd = app.add_subcommand("export-graph", "Write the block graph as DOT");
  graph_cmd->add_option("--config", graph.config, "experiment JSON")->required();
  graph_cmd->add_option("--out", graph.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (*seed_opt) train.seed = seed;
      return cmd_train(train, train_cmd->remaining());
    }
    if (*tune_cmd) return cmd_tune(tune, argv[0]);
    if (*vis_cmd) return cmd_visualize(vis);
    if (*graph_cmd) return cmd_visualize(graph);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "akid: %s\n", e.what());
    return 2;
  }
  return 1;
}
