#pragma once

#include <memory>
#include <vector>

#include "mhs/sim.hpp"
#include "mhs/topology.hpp"

namespace mhs {

enum class AgentClass { Receiving, Junction };

struct AgentSpec {
  int agent_id = -1;
  AgentClass cls = AgentClass::Receiving;
  int node = -1;
  int action_dim = 0;
};

using Observation = std::vector<double>;

struct EnvConfig {
  int64_t episode_steps = 36000;
  double reward_scale = 0.01;
  int total_pallets = 500;
  // junction occupancy features: one per junction (crossing only) or two
  // per junction (loop exit + crossing)
  bool junction_obs_per_direction = false;
};

struct StepResult {
  std::vector<uint8_t> event;  // I_t per agent
  double reward = 0.0;
  bool done = false;
  int64_t clock = 0;
  std::vector<int32_t> decision_pallet;  // per agent, -1 when no event
};

// Multi-agent facade over the simulator: reset/step lifecycle, normalized
// global observations plus per-agent identifier, shared reward. One Env per
// episode worker; instances are independent.
class Env {
 public:
  Env(std::shared_ptr<const Topology> topo, DemandModel demand, EnvConfig cfg);

  const std::vector<AgentSpec>& agents() const { return agents_; }
  int agent_count() const { return static_cast<int>(agents_.size()); }
  int obs_dim() const { return obs_dim_; }

  StepResult reset(uint64_t seed);
  StepResult step(const std::vector<std::pair<int, int>>& actions_by_agent);

  Observation observe(int agent_id) const;

  // caps and layout that saved policies depend on
  uint64_t caps_hash() const;

  const SimEngine& engine() const { return engine_; }
  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }
  const Topology& topology() const { return *topo_; }
  const EnvConfig& config() const { return cfg_; }

  int agent_for_node(int node) const;  // -1 when the node has no agent

 private:
  StepResult make_result(const StepOutput& out);
  void refresh_features();

  std::shared_ptr<const Topology> topo_;
  EnvConfig cfg_;
  SimEngine engine_;
  SimState state_;
  std::vector<AgentSpec> agents_;
  std::vector<int> node_to_agent_;
  FeatureCounts features_;
  int obs_dim_ = 0;
  int diff_halfwidth_ = 16;
  bool live_ = false;
};

// Builds topology ([topology] preset/file or inline layout sections),
// demand and env config from one document.
struct EnvBundle {
  std::shared_ptr<const Topology> topo;
  DemandModel demand;
  EnvConfig env_cfg;
};
EnvBundle make_env_bundle(const ConfigDoc& doc);

}  // namespace mhs
