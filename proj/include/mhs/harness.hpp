#pragma once

#include <map>
#include <string>
#include <vector>

#include "mhs/marl.hpp"

namespace mhs {

struct ThroughputSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  int n = 0;
};

// Five-number summary. Quartiles use the median-of-halves convention,
// excluding the median element for odd n.
ThroughputSummary summarize(const std::vector<double>& totals);

// 100 * (candidate - baseline) / baseline; baseline must be positive.
double percent_improvement(double baseline_median, double candidate_median);

struct EvalConfig {
  std::string strategy = "high";  // random|low|medium|high|
                                  // marl_checkpoint|hybrid_marl_checkpoint
  bool assisted = false;
  int episodes = 150;
  uint64_t base_seed = 1000;
  int64_t episode_steps_override = 0;  // 0 keeps [env] episode_steps
  std::string checkpoint_dir;

  static EvalConfig from_config(const ConfigDoc& doc);
};

// Seeded multi-episode evaluation; episode k runs under seed base_seed + k.
std::vector<double> run_eval(const ConfigDoc& doc, const EvalConfig& cfg);

struct StrategyResult {
  std::string name;
  std::vector<double> totals;
  ThroughputSummary summary;
};

struct Improvement {
  std::string baseline;
  std::string candidate;
  double percent = 0;
};

struct ExperimentReport {
  int schema_version = 1;
  std::string preset;
  std::string config_hash;  // hex of the effective config
  std::vector<StrategyResult> strategies;
  std::vector<Improvement> improvements;  // all unordered pairs, from medians
  bool incomplete = false;
  std::map<std::string, std::string> extras;

  const StrategyResult* find(const std::string& name) const;
};

std::string report_to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const std::string& text);
// raw per-episode totals table: strategy,episode,seed,total_throughput
std::string report_to_csv(const ExperimentReport& r,
                          uint64_t base_seed);

// Minimal structural validation against the published JSON schema document
// (type/properties/required/items subset). Throws on violation.
void validate_report_json(const std::string& report_text,
                          const std::string& schema_text);

// presets: heuristic_comparison, marl_vs_heuristics, hybrid_critics,
// marl_star. Train where needed, evaluate everything, compile the report.
ExperimentReport run_experiment_preset(const std::string& name,
                                       const ConfigDoc& doc);

// One traced episode of a strategy; line-delimited records
// step,agent_id,event,requested_action,applied_action,override_cause,reward_delta
std::string export_trace(const ConfigDoc& doc, const EvalConfig& cfg);

}  // namespace mhs
