#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "mhs/harness.hpp"

namespace {

mhs::ConfigDoc load_config(const std::string& path) {
  if (path.empty()) return mhs::ConfigDoc{};
  return mhs::ConfigDoc::parse_file(path);
}

void write_or_print(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw mhs::RuntimeFailure("cannot write output file: " + out_path);
  f << content;
}

void print_summary(const std::string& name, const mhs::ThroughputSummary& s) {
  std::printf("%-24s n=%-4d min=%-7.0f q1=%-8.1f median=%-8.1f q3=%-8.1f "
              "max=%-7.0f mean=%.1f\n",
              name.c_str(), s.n, s.min, s.q1, s.median, s.q3, s.max, s.mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conveyor dispatching simulator and MARL trainer"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_path, format = "json";
  int64_t seed = -1;
  int64_t episodes = -1;
  int64_t steps = -1;
  app.add_option("--config", config_path, "config document path");
  app.add_option("--seed", seed, "seed override");
  app.add_option("--episodes", episodes, "episode count override");
  app.add_option("--steps", steps, "episode step count override");
  app.add_option("--out", out_path, "output file (default stdout)");
  app.add_option("--format", format, "report format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* sim_cmd = app.add_subcommand("simulate", "heuristic/random rollouts");
  std::string sim_strategy = "high";
  sim_cmd->add_option("--strategy", sim_strategy,
                      "random, low, medium or high");

  auto* train_cmd = app.add_subcommand("train", "train dispatching policies");

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a strategy");
  std::string eval_strategy, eval_assist, eval_checkpoint;
  eval_cmd->add_option("--strategy", eval_strategy, "eval strategy override");
  eval_cmd->add_option("--assist", eval_assist, "assisted or non_assisted");
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "policy bundle directory");

  auto* exp_cmd = app.add_subcommand("experiment", "run a named preset");
  std::string preset;
  exp_cmd->add_option("preset", preset, "preset name")->required();

  auto* trace_cmd =
      app.add_subcommand("export-trace", "dump one episode's action trace");
  std::string trace_strategy = "high", trace_checkpoint, trace_assist;
  trace_cmd->add_option("--strategy", trace_strategy, "strategy to trace");
  trace_cmd->add_option("--checkpoint", trace_checkpoint,
                        "policy bundle directory");
  trace_cmd->add_option("--assist", trace_assist, "assisted or non_assisted");

  CLI11_PARSE(app, argc, argv);

  try {
    mhs::ConfigDoc doc = load_config(config_path);
    if (steps > 0) doc.set("env", "episode_steps", std::to_string(steps));

    if (sim_cmd->parsed() || eval_cmd->parsed()) {
      mhs::EvalConfig cfg = mhs::EvalConfig::from_config(doc);
      if (sim_cmd->parsed()) {
        cfg.strategy = sim_strategy;
        cfg.checkpoint_dir.clear();
      } else {
        if (!eval_strategy.empty()) cfg.strategy = eval_strategy;
        if (!eval_checkpoint.empty()) cfg.checkpoint_dir = eval_checkpoint;
        if (eval_assist == "assisted") cfg.assisted = true;
        if (eval_assist == "non_assisted") cfg.assisted = false;
      }
      if (episodes > 0) cfg.episodes = static_cast<int>(episodes);
      if (seed >= 0) cfg.base_seed = static_cast<uint64_t>(seed);
      auto totals = mhs::run_eval(doc, cfg);
      auto summary = mhs::summarize(totals);
      print_summary(cfg.strategy, summary);
      if (!out_path.empty()) {
        mhs::ExperimentReport r;
        r.preset = sim_cmd->parsed() ? "simulate" : "evaluate";
        r.config_hash = "0x0";
        r.strategies.push_back({cfg.strategy, totals, summary});
        write_or_print(out_path, format == "csv"
                                     ? mhs::report_to_csv(r, cfg.base_seed)
                                     : mhs::report_to_json(r));
      }
      return 0;
    }

    if (train_cmd->parsed()) {
      mhs::TrainSetup setup = mhs::TrainSetup::from_config(doc);
      if (seed >= 0) setup.train_seed = static_cast<uint64_t>(seed);
      if (episodes > 0) setup.episodes = static_cast<int>(episodes);
      if (steps > 0) setup.env_cfg.episode_steps = steps;
      if (!out_path.empty()) setup.out_dir = out_path;
      if (setup.out_dir.empty()) setup.out_dir = "runs/train";
      mhs::TrainResult res = mhs::train(setup);
      std::printf("trained %d episodes; best eval return %.3f at episode %d\n",
                  setup.episodes, res.best_eval, res.best_episode);
      std::printf("policy bundle: %s\n", res.policy_dir.c_str());
      return 0;
    }

    if (exp_cmd->parsed()) {
      if (episodes > 0) doc.set("eval", "episodes", std::to_string(episodes));
      if (seed >= 0) doc.set("train", "seed", std::to_string(seed));
      mhs::ExperimentReport report = mhs::run_experiment_preset(preset, doc);
      for (const auto& s : report.strategies)
        print_summary(s.name, s.summary);
      uint64_t base_seed =
          static_cast<uint64_t>(doc.get_int("eval", "base_seed", 1000));
      write_or_print(out_path, format == "csv"
                                   ? mhs::report_to_csv(report, base_seed)
                                   : mhs::report_to_json(report));
      return 0;
    }

    if (trace_cmd->parsed()) {
      mhs::EvalConfig cfg = mhs::EvalConfig::from_config(doc);
      cfg.strategy = trace_strategy;
      if (!trace_checkpoint.empty()) cfg.checkpoint_dir = trace_checkpoint;
      if (trace_assist == "assisted") cfg.assisted = true;
      if (seed >= 0) cfg.base_seed = static_cast<uint64_t>(seed);
      write_or_print(out_path, mhs::export_trace(doc, cfg));
      return 0;
    }
  } catch (const mhs::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
