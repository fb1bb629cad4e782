#include "mhs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mhs/errors.hpp"

namespace mhs {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

double median_of(const std::vector<double>& sorted, size_t lo, size_t hi) {
  size_t n = hi - lo;
  size_t mid = lo + n / 2;
  return (n % 2 == 1) ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool is_heuristic_strategy(const std::string& s) {
  return s == "random" || s == "low" || s == "medium" || s == "high";
}

struct StrategyRun {
  PolicySet ps;  // empty for pure heuristic strategies
  HeuristicBinding binding;
  CollectOptions opts;
};

HeuristicBinding binding_from_manifest_desc(const Env& env,
                                            const std::string& desc,
                                            const HeuristicParams& params) {
  if (desc.rfind("named:", 0) == 0)
    return HeuristicBinding::named(env, desc.substr(6), params);
  if (desc.rfind("frozen:", 0) == 0)
    return HeuristicBinding::frozen(env, desc.substr(7));
  throw RuntimeFailure("manifest carries unknown heuristic binding '" + desc +
                       "'");
}

StrategyRun resolve_strategy(const Env& env, const EvalConfig& cfg,
                             const HeuristicParams& params) {
  StrategyRun run;
  if (is_heuristic_strategy(cfg.strategy)) {
    run.binding = HeuristicBinding::named(env, cfg.strategy, params);
    run.opts.mode = InterleaveMode::HeuristicOnly;
    run.opts.store_transitions = false;
    return run;
  }
  if (cfg.strategy != "marl_checkpoint" &&
      cfg.strategy != "hybrid_marl_checkpoint")
    throw ConfigError("unknown eval strategy '" + cfg.strategy + "'");
  if (cfg.checkpoint_dir.empty())
    throw ConfigError("strategy " + cfg.strategy + " needs a checkpoint dir");
  run.ps = load_policy_set(cfg.checkpoint_dir, env);
  if (cfg.strategy == "hybrid_marl_checkpoint") {
    bool has_junction = false;
    for (int agent : run.ps.actor_agents)
      if (env.agents()[agent].cls == AgentClass::Junction) has_junction = true;
    if (!has_junction)
      throw RuntimeFailure(
          "hybrid_marl_checkpoint needs junction actors in the bundle '" +
          cfg.checkpoint_dir + "'");
  }
  ordered_json manifest =
      ordered_json::parse(policy_manifest_text(cfg.checkpoint_dir));
  run.binding = binding_from_manifest_desc(
      env, manifest.value("heuristic", "named:high"), params);
  run.opts.mode = cfg.assisted ? InterleaveMode::AlternateByStep
                               : InterleaveMode::ActorOnly;
  run.opts.greedy_actors = true;
  run.opts.store_transitions = false;
  return run;
}

Env make_eval_env(const ConfigDoc& doc, const EvalConfig& cfg) {
  EnvBundle bundle = make_env_bundle(doc);
  if (cfg.episode_steps_override > 0)
    bundle.env_cfg.episode_steps = cfg.episode_steps_override;
  return Env(bundle.topo, bundle.demand, bundle.env_cfg);
}

}  // namespace

ThroughputSummary summarize(const std::vector<double>& totals) {
  if (totals.empty()) throw RuntimeFailure("summarize: empty input");
  std::vector<double> s = totals;
  std::sort(s.begin(), s.end());
  ThroughputSummary out;
  out.n = static_cast<int>(s.size());
  out.min = s.front();
  out.max = s.back();
  out.median = median_of(s, 0, s.size());
  size_t half = s.size() / 2;
  out.q1 = half == 0 ? out.median : median_of(s, 0, half);
  out.q3 = half == 0 ? out.median : median_of(s, s.size() - half, s.size());
  double sum = 0;
  for (double v : s) sum += v;
  out.mean = sum / static_cast<double>(s.size());
  return out;
}

double percent_improvement(double baseline_median, double candidate_median) {
  if (!(baseline_median > 0))
    throw RuntimeFailure("percent_improvement: baseline must be positive");
  return 100.0 * (candidate_median - baseline_median) / baseline_median;
}

EvalConfig EvalConfig::from_config(const ConfigDoc& doc) {
  EvalConfig c;
  c.strategy = doc.get_string("eval", "strategy", c.strategy);
  std::string assist = doc.get_string("eval", "assist", "non_assisted");
  if (assist == "assisted")
    c.assisted = true;
  else if (assist != "non_assisted")
    throw ConfigError("[eval] assist must be assisted or non_assisted");
  c.episodes = static_cast<int>(doc.get_int("eval", "episodes", 150));
  c.base_seed = static_cast<uint64_t>(doc.get_int("eval", "base_seed", 1000));
  c.episode_steps_override = doc.get_int("eval", "episode_steps", 0);
  c.checkpoint_dir = doc.get_string("eval", "checkpoint", "");
  if (c.episodes < 1) throw ConfigError("[eval] episodes must be >= 1");
  return c;
}

std::vector<double> run_eval(const ConfigDoc& doc, const EvalConfig& cfg) {
  Env env = make_eval_env(doc, cfg);
  HeuristicParams params = HeuristicParams::from_config(doc, env.topology());
  StrategyRun run = resolve_strategy(env, cfg, params);
  std::vector<double> totals;
  totals.reserve(cfg.episodes);
  for (int k = 0; k < cfg.episodes; ++k) {
    uint64_t seed = cfg.base_seed + static_cast<uint64_t>(k);
    Rng rng = Rng::derive(seed, 0xE11A);
    EpisodeBuffer buf =
        collect_episode(env, run.ps, run.binding, run.opts, seed, rng);
    totals.push_back(static_cast<double>(buf.total_throughput));
  }
  return totals;
}

const StrategyResult* ExperimentReport::find(const std::string& name) const {
  for (const auto& s : strategies)
    if (s.name == name) return &s;
  return nullptr;
}

std::string report_to_json(const ExperimentReport& r) {
  ordered_json j;
  j["schema_version"] = r.schema_version;
  j["preset"] = r.preset;
  j["config_hash"] = r.config_hash;
  j["incomplete"] = r.incomplete;
  ordered_json strategies = ordered_json::array();
  for (const auto& s : r.strategies) {
    ordered_json js;
    js["name"] = s.name;
    js["totals"] = s.totals;
    js["summary"] = {{"min", s.summary.min},   {"q1", s.summary.q1},
                     {"median", s.summary.median}, {"q3", s.summary.q3},
                     {"max", s.summary.max},   {"mean", s.summary.mean},
                     {"n", s.summary.n}};
    strategies.push_back(js);
  }
  j["strategies"] = strategies;
  ordered_json improvements = ordered_json::array();
  for (const auto& im : r.improvements) {
    improvements.push_back({{"baseline", im.baseline},
                            {"candidate", im.candidate},
                            {"percent", im.percent}});
  }
  j["improvements"] = improvements;
  ordered_json extras = ordered_json::object();
  for (const auto& [k, v] : r.extras) extras[k] = v;
  j["extras"] = extras;
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ExperimentReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.preset = j.at("preset").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.incomplete = j.at("incomplete").get<bool>();
  for (const auto& js : j.at("strategies")) {
    StrategyResult s;
    s.name = js.at("name").get<std::string>();
    s.totals = js.at("totals").get<std::vector<double>>();
    const auto& sum = js.at("summary");
    s.summary.min = sum.at("min").get<double>();
    s.summary.q1 = sum.at("q1").get<double>();
    s.summary.median = sum.at("median").get<double>();
    s.summary.q3 = sum.at("q3").get<double>();
    s.summary.max = sum.at("max").get<double>();
    s.summary.mean = sum.at("mean").get<double>();
    s.summary.n = sum.at("n").get<int>();
    r.strategies.push_back(std::move(s));
  }
  for (const auto& ji : j.at("improvements")) {
    Improvement im;
    im.baseline = ji.at("baseline").get<std::string>();
    im.candidate = ji.at("candidate").get<std::string>();
    im.percent = ji.at("percent").get<double>();
    r.improvements.push_back(std::move(im));
  }
  for (const auto& [k, v] : j.at("extras").items())
    r.extras[k] = v.get<std::string>();
  return r;
}

std::string report_to_csv(const ExperimentReport& r, uint64_t base_seed) {
  std::ostringstream out;
  out << "strategy,episode,seed,total_throughput\n";
  char buf[64];
  for (const auto& s : r.strategies) {
    for (size_t i = 0; i < s.totals.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", s.totals[i]);
      out << s.name << "," << i << "," << (base_seed + i) << "," << buf
          << "\n";
    }
  }
  return out.str();
}

namespace {

void validate_node(const ordered_json& schema, const ordered_json& value,
                   const std::string& path) {
  if (schema.contains("type")) {
    std::string t = schema.at("type").get<std::string>();
    bool ok = (t == "object" && value.is_object()) ||
              (t == "array" && value.is_array()) ||
              (t == "string" && value.is_string()) ||
              (t == "integer" && value.is_number_integer()) ||
              (t == "number" && value.is_number()) ||
              (t == "boolean" && value.is_boolean());
    if (!ok)
      throw RuntimeFailure("schema violation at " + path + ": expected " + t);
  }
  if (schema.contains("required")) {
    for (const auto& req : schema.at("required")) {
      if (!value.contains(req.get<std::string>()))
        throw RuntimeFailure("schema violation at " + path +
                             ": missing required field '" +
                             req.get<std::string>() + "'");
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema.at("properties").items()) {
      if (value.contains(key))
        validate_node(sub, value.at(key), path + "." + key);
    }
  }
  if (schema.contains("items") && value.is_array()) {
    const auto& sub = schema.at("items");
    for (size_t i = 0; i < value.size(); ++i)
      validate_node(sub, value[i], path + "[" + std::to_string(i) + "]");
  }
}

}  // namespace

void validate_report_json(const std::string& report_text,
                          const std::string& schema_text) {
  ordered_json schema = ordered_json::parse(schema_text);
  ordered_json value = ordered_json::parse(report_text);
  validate_node(schema, value, "$");
}

namespace {

StrategyResult eval_strategy(const ConfigDoc& doc, const std::string& label,
                             EvalConfig cfg) {
  StrategyResult s;
  s.name = label;
  s.totals = run_eval(doc, cfg);
  s.summary = summarize(s.totals);
  return s;
}

void add_pairwise_improvements(ExperimentReport& r) {
  for (size_t i = 0; i < r.strategies.size(); ++i)
    for (size_t j = i + 1; j < r.strategies.size(); ++j) {
      // degenerate zero-throughput baselines give no percentage
      if (!(r.strategies[i].summary.median > 0)) continue;
      Improvement im;
      im.baseline = r.strategies[i].name;
      im.candidate = r.strategies[j].name;
      im.percent = percent_improvement(r.strategies[i].summary.median,
                                       r.strategies[j].summary.median);
      r.improvements.push_back(im);
    }
}

std::string train_variant(const ConfigDoc& doc, const std::string& variant,
                          const std::string& heuristic, CriticArch arch,
                          bool junction_trainable, InterleaveMode mode,
                          uint64_t seed_offset) {
  TrainSetup setup = TrainSetup::from_config(doc);
  setup.heuristic = heuristic;
  setup.arch = arch;
  setup.junction_agents_trainable = junction_trainable;
  setup.mode = mode;
  setup.train_seed += seed_offset;
  std::string base = setup.out_dir.empty() ? std::string("runs") : setup.out_dir;
  setup.out_dir = base + "/" + variant;
  TrainResult res = train(setup);
  return res.policy_dir;
}

uint64_t effective_config_hash(const ConfigDoc& doc) {
  return fnv1a64(doc.canonical());
}

EvalConfig checkpoint_eval(const ConfigDoc& doc, const std::string& dir,
                           bool assisted, bool hybrid) {
  EvalConfig e = EvalConfig::from_config(doc);
  e.strategy = hybrid ? "hybrid_marl_checkpoint" : "marl_checkpoint";
  e.assisted = assisted;
  e.checkpoint_dir = dir;
  return e;
}

}  // namespace

ExperimentReport run_experiment_preset(const std::string& name,
                                       const ConfigDoc& doc) {
  ExperimentReport r;
  r.preset = name;
  r.config_hash = hex64(effective_config_hash(doc));

  EvalConfig base_eval = EvalConfig::from_config(doc);
  auto heuristic_eval = [&](const std::string& strategy) {
    EvalConfig e = base_eval;
    e.strategy = strategy;
    e.assisted = false;
    e.checkpoint_dir.clear();
    return eval_strategy(doc, strategy, e);
  };

  if (name == "heuristic_comparison") {
    for (const std::string& s : {"random", "low", "medium", "high"})
      r.strategies.push_back(heuristic_eval(s));
    add_pairwise_improvements(r);
    return r;
  }

  if (name == "marl_vs_heuristics") {
    r.strategies.push_back(heuristic_eval("random"));
    // vanilla training: actors explore alone
    std::string vanilla = train_variant(doc, "marl_vanilla", "high",
                                        CriticArch::Separate, false,
                                        InterleaveMode::ActorOnly, 0);
    r.strategies.push_back(eval_strategy(
        doc, "marl_na", checkpoint_eval(doc, vanilla, false, false)));
    r.extras["marl_vanilla_dir"] = vanilla;
    for (const std::string& h : {"low", "medium", "high"}) {
      r.strategies.push_back(heuristic_eval(h));
      std::string dir = train_variant(doc, "marl_" + h, h,
                                      CriticArch::Separate, false,
                                      InterleaveMode::AlternateByStep, 0);
      r.extras["marl_" + h + "_dir"] = dir;
      r.strategies.push_back(eval_strategy(
          doc, "marl_" + h + "_assisted",
          checkpoint_eval(doc, dir, true, false)));
      r.strategies.push_back(eval_strategy(
          doc, "marl_" + h + "_na", checkpoint_eval(doc, dir, false, false)));
    }
    add_pairwise_improvements(r);
    return r;
  }

  if (name == "hybrid_critics") {
    r.strategies.push_back(heuristic_eval("high"));
    std::string joint = train_variant(doc, "hybrid_joint", "high",
                                      CriticArch::Joint, true,
                                      InterleaveMode::AlternateByStep, 0);
    std::string separate = train_variant(doc, "hybrid_separate", "high",
                                         CriticArch::Separate, true,
                                         InterleaveMode::AlternateByStep, 0);
    r.extras["hybrid_joint_dir"] = joint;
    r.extras["hybrid_separate_dir"] = separate;
    for (bool assisted : {true, false}) {
      std::string suffix = assisted ? "assisted" : "na";
      r.strategies.push_back(
          eval_strategy(doc, "hybrid_joint_" + suffix,
                        checkpoint_eval(doc, joint, assisted, true)));
      r.strategies.push_back(
          eval_strategy(doc, "hybrid_separate_" + suffix,
                        checkpoint_eval(doc, separate, assisted, true)));
    }
    add_pairwise_improvements(r);
    return r;
  }

  if (name == "marl_star") {
    r.strategies.push_back(heuristic_eval("high"));
    std::string first = train_variant(doc, "marl_star_first", "high",
                                      CriticArch::Separate, true,
                                      InterleaveMode::AlternateByStep, 0);
    r.extras["first_iteration_dir"] = first;
    {
      ordered_json manifest = ordered_json::parse(policy_manifest_text(first));
      ordered_json hashes = ordered_json::array();
      for (const auto& a : manifest.at("actors"))
        hashes.push_back(a.at("checksum").get<std::string>());
      r.extras["first_iteration_actor_checksums"] = hashes.dump();
    }
    r.strategies.push_back(eval_strategy(
        doc, "marl_first_na", checkpoint_eval(doc, first, false, true)));
    r.strategies.push_back(eval_strategy(
        doc, "marl_first_assisted", checkpoint_eval(doc, first, true, true)));

    TrainSetup second_setup = TrainSetup::from_config(doc);
    second_setup.arch = CriticArch::Separate;
    second_setup.junction_agents_trainable = true;
    second_setup.mode = InterleaveMode::AlternateByStep;
    second_setup =
        make_second_iteration_setup(second_setup, first);
    std::string base_dir =
        second_setup.out_dir.empty() ? std::string("runs") : second_setup.out_dir;
    second_setup.out_dir = base_dir + "/marl_star_second";
    TrainResult second = train(second_setup);
    r.extras["second_iteration_dir"] = second.policy_dir;
    {
      ordered_json manifest =
          ordered_json::parse(policy_manifest_text(second.policy_dir));
      r.extras["second_iteration_heuristic"] =
          manifest.at("heuristic").get<std::string>();
    }
    r.strategies.push_back(
        eval_strategy(doc, "marl_star_na",
                      checkpoint_eval(doc, second.policy_dir, false, true)));
    r.strategies.push_back(
        eval_strategy(doc, "marl_star_assisted",
                      checkpoint_eval(doc, second.policy_dir, true, true)));
    add_pairwise_improvements(r);
    return r;
  }

  throw ConfigError(
      "unknown experiment preset '" + name +
      "' (expected heuristic_comparison, marl_vs_heuristics, hybrid_critics "
      "or marl_star)");
}

std::string export_trace(const ConfigDoc& doc, const EvalConfig& cfg) {
  Env env = make_eval_env(doc, cfg);
  HeuristicParams params = HeuristicParams::from_config(doc, env.topology());
  StrategyRun run = resolve_strategy(env, cfg, params);
  std::vector<DecisionTraceRow> decisions;
  run.opts.trace = &decisions;
  Rng rng = Rng::derive(cfg.base_seed, 0xE11A);
  EpisodeBuffer buf =
      collect_episode(env, run.ps, run.binding, run.opts, cfg.base_seed, rng);

  struct Row {
    int64_t step;
    int order;  // decisions before overrides at the same step
    std::string text;
  };
  std::vector<Row> rows;
  char line[160];
  for (const auto& d : decisions) {
    double reward = d.step >= 1 ? buf.rewards[d.step - 1] : 0.0;
    std::snprintf(line, sizeof(line), "%lld,%d,decision,%d,%d,,%.9g",
                  static_cast<long long>(d.step), d.agent, d.action, d.action,
                  reward);
    rows.push_back({d.step, 0, line});
  }
  for (const auto& ov : env.state().override_log) {
    int agent = env.agent_for_node(ov.node);
    double reward = ov.step >= 1 && ov.step <= (int64_t)buf.rewards.size()
                        ? buf.rewards[ov.step - 1]
                        : 0.0;
    std::snprintf(line, sizeof(line), "%lld,%d,override,%d,%d,%s,%.9g",
                  static_cast<long long>(ov.step), agent, ov.requested,
                  ov.applied, to_string(ov.cause), reward);
    rows.push_back({ov.step, 1, line});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.step != b.step ? a.step < b.step : a.order < b.order;
  });
  std::ostringstream out;
  out << "step,agent_id,event,requested_action,applied_action,override_cause,"
         "reward_delta\n";
  for (const auto& row : rows) out << row.text << "\n";
  return out.str();
}

}  // namespace mhs
