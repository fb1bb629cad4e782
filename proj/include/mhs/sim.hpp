#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "mhs/rng.hpp"
#include "mhs/topology.hpp"

namespace mhs {

enum class Phase : uint8_t {
  CirculatingEmpty,
  Queued,
  Processing,
  InTransitLoadedReceiving,
  InTransitLoadedShipping,
  InTransitEmptyDirected,
};

enum class OverrideCause : uint8_t {
  BufferFullReroute,
  JunctionSectionFullRedirect,
  JunctionSectionFullHold,
};

const char* to_string(OverrideCause c);

// A dispatching decision the environment could not apply as requested.
// requested/applied are action encodings: storage order index for
// receiving-side reroutes, direction (0/1) at junctions; applied is -1
// when the pallet stays put (reroute around the loop, or a hold).
struct ActionOverride {
  int64_t step = 0;
  int32_t node = -1;
  int32_t requested = -1;
  int32_t applied = -1;
  OverrideCause cause = OverrideCause::BufferFullReroute;
};

struct Pallet {
  Phase phase = Phase::CirculatingEmpty;
  int32_t segment = -1;  // belt position, -1 when at a node
  int32_t offset = 0;
  int32_t node = -1;  // queue membership, -1 when on the belt
  int32_t dest = -1;
  int32_t claimed_outgoing = -1;  // demand claimed at a storage point
  int32_t source_storage = -1;    // origin of the shipping leg
  int32_t chosen_direction = -1;  // junction decision awaiting departure
  std::vector<int32_t> route;     // segment indices
  int32_t route_pos = -1;         // index of current segment in route
  int64_t moved_at = -1;
  bool hold_logged = false;
};

struct NodeBuffer {
  std::deque<int32_t> queue;
  int64_t busy_until = -1;
  bool head_done = false;
};

// One undecided dispatch per incoming/junction node at a time; raised when
// service completes, answered through the next step's action map.
struct PendingDecision {
  int32_t node = -1;
  int32_t pallet = -1;
  int64_t raised_at = -1;
  bool answered = false;
  int32_t action = -1;
};

struct ThroughputCounters {
  int64_t receiving = 0;
  int64_t shipping = 0;
  int32_t per_step_delta = 0;
};

struct DemandModel {
  // events per hour, by outgoing node order
  std::vector<double> rates_per_hour;
  // per outgoing node: source weights over storage order (sum 1)
  std::vector<std::vector<double>> source_weights;

  static DemandModel defaults(const Topology& t);
  static DemandModel zero(const Topology& t);
  void validate(const Topology& t) const;
};

struct SimState {
  int64_t clock = 0;
  std::vector<Pallet> pallets;
  std::vector<std::deque<int32_t>> segment_pallets;  // front = downstream
  std::vector<NodeBuffer> node_buffers;
  std::vector<PendingDecision> pending;  // per node; pallet < 0 when idle
  std::vector<std::deque<int32_t>> demand;  // per storage order: target outgoing node
  ThroughputCounters counters;
  // incrementally maintained feature counters
  std::vector<int32_t> heading_to_storage;     // In(s), storage order
  std::vector<int32_t> shipping_from_storage;  // Out(s), storage order
  std::vector<int32_t> loop_pallets;           // physical count per loop
  Rng demand_rng;
  std::vector<ActionOverride> override_log;
};

struct DecisionRequest {
  int32_t node = -1;
  int32_t pallet = -1;
};

struct StepOutput {
  std::vector<DecisionRequest> new_decisions;
  double reward_delta = 0.0;
  int32_t throughput_delta = 0;
};

struct FeatureCounts {
  std::vector<int32_t> heading_to_storage;
  std::vector<int32_t> junction_section;  // pallets on each junction's crossing
  std::vector<int32_t> junction_dir0;     // pallets on each junction's loop exit
  std::vector<int32_t> out_minus_in;      // Out(s) - In(s), storage order
};

struct SimConfig {
  int total_pallets = 500;
  int64_t episode_steps = 36000;
  double reward_scale = 0.01;
};

struct TraceRecord {
  int64_t step = 0;
  int32_t node = -1;
  bool is_override = false;
  int32_t requested = -1;
  int32_t applied = -1;
  int32_t cause = -1;  // OverrideCause when is_override
  double reward_delta = 0.0;
};

// Advances the world one 0.1 s step at a time. Owns no mutable state:
// distinct SimStates step independently.
class SimEngine {
 public:
  SimEngine(const Topology& topo, DemandModel demand, SimConfig cfg);

  SimState init(uint64_t seed) const;

  // actions_by_node answers exactly the decisions raised by the previous
  // step. Throws RuntimeFailure on missing/extra/out-of-range actions.
  StepOutput step(SimState& st,
                  const std::vector<std::pair<int32_t, int32_t>>& actions_by_node) const;

  FeatureCounts features(const SimState& st) const;

  // action index -> node translations
  int storage_action_dim() const;
  int storage_node_for_action(int action) const;

  using PolicyCallback =
      std::function<int32_t(const SimState&, const DecisionRequest&)>;
  // Steps a fresh state to episode_steps; returns total throughput.
  int64_t run_episode(SimState& st, const PolicyCallback& policy,
                      std::vector<TraceRecord>* trace = nullptr) const;

  // Full consistency check (placement, buffers, counters); throws on
  // violation. Test and debugging aid, not called in the hot loop.
  void check_invariants(const SimState& st) const;

  const Topology& topology() const { return *topo_; }
  const SimConfig& config() const { return cfg_; }
  const DemandModel& demand_model() const { return demand_; }
  int64_t steps_per_hour() const { return steps_per_hour_; }

 private:
  void validate_actions(const SimState& st,
                        const std::vector<std::pair<int32_t, int32_t>>& actions) const;
  void apply_actions(SimState& st,
                     const std::vector<std::pair<int32_t, int32_t>>& actions) const;
  void node_phase(SimState& st) const;
  void belt_phase(SimState& st) const;
  void demand_phase(SimState& st) const;
  void complete_service(SimState& st, int node, int pallet_id) const;
  bool try_depart(SimState& st, int node, int pallet_id) const;
  bool handle_segment_exit(SimState& st, int seg) const;
  bool cell0_free(const SimState& st, int seg) const;
  void enter_segment(SimState& st, int pallet_id, int seg, int from_loop) const;
  void admit_to_node(SimState& st, int pallet_id, int node) const;

  const Topology* topo_;
  DemandModel demand_;
  SimConfig cfg_;
  int64_t steps_per_hour_;
};

uint64_t state_fingerprint(const SimState& st);

}  // namespace mhs
