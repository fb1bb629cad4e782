#include "mhs/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mhs/errors.hpp"

namespace mhs {

namespace {

SimConfig sim_config_of(const EnvConfig& cfg) {
  SimConfig s;
  s.total_pallets = cfg.total_pallets;
  s.episode_steps = cfg.episode_steps;
  s.reward_scale = cfg.reward_scale;
  return s;
}

}  // namespace

Env::Env(std::shared_ptr<const Topology> topo, DemandModel demand,
         EnvConfig cfg)
    : topo_(std::move(topo)),
      cfg_(cfg),
      engine_(*topo_, std::move(demand), sim_config_of(cfg)) {
  node_to_agent_.assign(topo_->nodes().size(), -1);
  for (int node : topo_->incoming_nodes()) {
    AgentSpec a;
    a.agent_id = static_cast<int>(agents_.size());
    a.cls = AgentClass::Receiving;
    a.node = node;
    a.action_dim = static_cast<int>(topo_->storage_nodes().size());
    node_to_agent_[node] = a.agent_id;
    agents_.push_back(a);
  }
  for (int node : topo_->junction_nodes()) {
    AgentSpec a;
    a.agent_id = static_cast<int>(agents_.size());
    a.cls = AgentClass::Junction;
    a.node = node;
    a.action_dim = 2;
    node_to_agent_[node] = a.agent_id;
    agents_.push_back(a);
  }
  if (agents_.empty()) throw ConfigError("layout exposes no decision points");

  int n_storage = static_cast<int>(topo_->storage_nodes().size());
  int n_junction = static_cast<int>(topo_->junction_nodes().size());
  obs_dim_ = 1 + n_storage + n_junction * (cfg_.junction_obs_per_direction ? 2 : 1) +
             n_storage;

  int max_storage_buffer = 1;
  for (int st : topo_->storage_nodes())
    max_storage_buffer =
        std::max(max_storage_buffer, topo_->nodes()[st].buffer_capacity);
  diff_halfwidth_ = 2 * max_storage_buffer;
}

int Env::agent_for_node(int node) const { return node_to_agent_[node]; }

void Env::refresh_features() { features_ = engine_.features(state_); }

StepResult Env::make_result(const StepOutput& out) {
  refresh_features();
  StepResult r;
  r.event.assign(agents_.size(), 0);
  r.decision_pallet.assign(agents_.size(), -1);
  for (const auto& d : out.new_decisions) {
    int agent = node_to_agent_[d.node];
    r.event[agent] = 1;
    r.decision_pallet[agent] = d.pallet;
  }
  r.reward = out.reward_delta;
  r.clock = state_.clock;
  r.done = state_.clock >= cfg_.episode_steps;
  return r;
}

StepResult Env::reset(uint64_t seed) {
  state_ = engine_.init(seed);
  live_ = true;
  return make_result(StepOutput{});
}

StepResult Env::step(const std::vector<std::pair<int, int>>& actions_by_agent) {
  if (!live_) throw RuntimeFailure("step before reset");
  if (state_.clock >= cfg_.episode_steps)
    throw RuntimeFailure("episode is done; reset before stepping");
  std::vector<std::pair<int32_t, int32_t>> by_node;
  by_node.reserve(actions_by_agent.size());
  for (const auto& [agent, action] : actions_by_agent) {
    if (agent < 0 || agent >= agent_count())
      throw RuntimeFailure("action for unknown agent id " +
                           std::to_string(agent));
    by_node.push_back({agents_[agent].node, action});
  }
  StepOutput out = engine_.step(state_, by_node);
  return make_result(out);
}

Observation Env::observe(int agent_id) const {
  if (!live_) throw RuntimeFailure("observe before reset");
  if (agent_id < 0 || agent_id >= agent_count())
    throw RuntimeFailure("observe: unknown agent id " +
                         std::to_string(agent_id));
  Observation obs;
  obs.reserve(obs_dim_);
  double denom = std::max(1, agent_count() - 1);
  obs.push_back(agent_id / denom);

  double cap_pallets = engine_.config().total_pallets;
  for (int32_t c : features_.heading_to_storage)
    obs.push_back(std::clamp(c / cap_pallets, 0.0, 1.0));

  double cap_section = topo_->connecting_section_capacity();
  for (size_t j = 0; j < features_.junction_section.size(); ++j) {
    if (cfg_.junction_obs_per_direction)
      obs.push_back(std::clamp(features_.junction_dir0[j] / cap_section, 0.0, 1.0));
    obs.push_back(std::clamp(features_.junction_section[j] / cap_section, 0.0, 1.0));
  }

  double d = diff_halfwidth_;
  for (int32_t diff : features_.out_minus_in)
    obs.push_back(std::clamp((diff + d) / (2 * d), 0.0, 1.0));

  return obs;
}

uint64_t Env::caps_hash() const {
  std::ostringstream ss;
  ss << "pallets=" << engine_.config().total_pallets
     << ";section=" << topo_->connecting_section_capacity()
     << ";diff=" << diff_halfwidth_ << ";obs=" << obs_dim_
     << ";agents=" << agent_count()
     << ";per_dir=" << (cfg_.junction_obs_per_direction ? 1 : 0);
  return fnv1a64(ss.str());
}

EnvBundle make_env_bundle(const ConfigDoc& doc) {
  EnvBundle b;

  // topology: inline layout sections win, then a file reference, then preset
  if (doc.has_section("loops")) {
    b.topo = std::make_shared<const Topology>(Topology::from_document(doc));
  } else if (doc.has_key("topology", "file")) {
    b.topo = std::make_shared<const Topology>(Topology::from_document(
        ConfigDoc::parse_file(doc.get_string("topology", "file", ""))));
  } else {
    std::string preset = doc.get_string("topology", "preset", "default");
    if (preset != "default")
      throw ConfigError("unknown topology preset '" + preset + "'");
    b.topo = std::make_shared<const Topology>(Topology::default_preset());
  }

  b.env_cfg.episode_steps = doc.get_int("env", "episode_steps", 36000);
  b.env_cfg.reward_scale = doc.get_double("env", "reward_scale", 0.01);
  b.env_cfg.total_pallets =
      static_cast<int>(doc.get_int("env", "total_pallets", 500));
  b.env_cfg.junction_obs_per_direction =
      doc.get_bool("env", "junction_obs_per_direction", false);

  b.demand = DemandModel::defaults(*b.topo);
  if (doc.has_key("env", "demand_rates_per_hour")) {
    b.demand.rates_per_hour =
        doc.get_double_list("env", "demand_rates_per_hour", {});
  }
  std::string scheme = doc.get_string("env", "demand_weight_scheme", "parity");
  if (scheme == "uniform") {
    size_t n_st = b.topo->storage_nodes().size();
    for (auto& row : b.demand.source_weights)
      row.assign(n_st, 1.0 / static_cast<double>(n_st));
  } else if (scheme != "parity") {
    throw ConfigError("demand_weight_scheme must be parity or uniform");
  }
  b.demand.validate(*b.topo);
  return b;
}

}  // namespace mhs
