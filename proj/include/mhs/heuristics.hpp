#pragma once

#include <functional>
#include <vector>

#include "mhs/config.hpp"
#include "mhs/mlp.hpp"
#include "mhs/rng.hpp"
#include "mhs/sim.hpp"
#include "mhs/topology.hpp"

namespace mhs {

// Tunable rule constants. The real-system values are withheld upstream;
// these defaults are sized against the stock preset's buffers and pallet
// counts and fully configurable under [heuristics].
struct HeuristicParams {
  double c1_medium = 4;
  double c1_high = 25;
  double c2_high = 25;
  double c3_high = 4;
  // loop_cost[i][j]: routing cost constant from loop i to loop j
  std::vector<std::vector<double>> loop_cost;

  static HeuristicParams defaults(const Topology& t);
  static HeuristicParams from_config(const ConfigDoc& doc, const Topology& t);
};

// Everything a dispatching rule reads, snapshotted from the live state.
// in/out counts are the raw In(s)/Out(s) quantities by storage order.
struct DispatchContext {
  const Topology* topo = nullptr;
  int node = -1;
  int node_loop = -1;
  std::vector<int32_t> in_counts;
  std::vector<int32_t> out_counts;
  std::vector<int32_t> loop_assigned;  // per loop, sum of in_counts
  std::vector<int32_t> loop_physical;  // per loop, pallets physically present
  Rng* rng = nullptr;
};

DispatchContext build_dispatch_context(const Topology& t, const SimState& st,
                                       int node, Rng* rng);

// All rules return storage action indices (positions in storage_nodes())
// or a junction direction. Pure in (ctx, params, rng state).

// uniform pick among same-loop storage points
int heuristic_low(const DispatchContext& ctx);

// cost value of one loop candidate under the distance-weighted load rule
double min_cost_value(double x_loop, double x_min, double x_max, double c);
// loop with the lowest cost; ties break to the smallest loop index
int min_cost_loop(const DispatchContext& ctx,
                  const std::vector<int>& candidate_loops,
                  const HeuristicParams& params);

int heuristic_medium(const DispatchContext& ctx, const HeuristicParams& params);
int heuristic_high(const DispatchContext& ctx, const HeuristicParams& params);

// direction whose downstream loop holds fewer pallets; tie -> 0
int junction_least_pallets(const DispatchContext& ctx);

// uniform pick across every storage point
int random_baseline(const DispatchContext& ctx);

// A frozen trained policy exposed through the heuristic interface: greedy
// argmax over the actor's outputs, parameters never updated.
using Observation = std::vector<double>;
using AgentHeuristic =
    std::function<int(const DispatchContext&, const Observation&)>;

AgentHeuristic frozen_policy_heuristic(Mlp actor, int expected_action_dim,
                                       int expected_obs_dim);
AgentHeuristic frozen_policy_heuristic_from_file(const std::string& path,
                                                 int expected_action_dim,
                                                 int expected_obs_dim,
                                                 uint64_t expected_caps_hash);

// Named rule lookup used by config/CLI ("random", "low", "medium", "high").
AgentHeuristic named_receiving_heuristic(const std::string& name,
                                         const HeuristicParams& params);

}  // namespace mhs
