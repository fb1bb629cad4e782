#include "mhs/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "mhs/errors.hpp"

namespace mhs {

namespace {
constexpr uint64_t kInitStreamTag = 0x11;
constexpr uint64_t kDemandStreamTag = 0x22;
constexpr int32_t kNoBlocker = std::numeric_limits<int32_t>::max();
}  // namespace

const char* to_string(OverrideCause c) {
  switch (c) {
    case OverrideCause::BufferFullReroute: return "buffer_full_reroute";
    case OverrideCause::JunctionSectionFullRedirect:
      return "junction_section_full_redirect";
    case OverrideCause::JunctionSectionFullHold:
      return "junction_section_full_hold";
  }
  return "?";
}

DemandModel DemandModel::defaults(const Topology& t) {
  // Rates taper across outgoing points; source weights favour even-order
  // storage points 2:1. Both stand in for withheld real-system statistics
  // and are configurable.
  DemandModel d;
  const std::vector<double> base = {140, 120, 100, 80, 60, 40};
  size_t n_out = t.outgoing_nodes().size();
  for (size_t i = 0; i < n_out; ++i)
    d.rates_per_hour.push_back(base[i % base.size()]);
  size_t n_st = t.storage_nodes().size();
  std::vector<double> w(n_st);
  double total = 0;
  for (size_t s = 0; s < n_st; ++s) {
    w[s] = (s % 2 == 0) ? 2.0 : 1.0;
    total += w[s];
  }
  for (auto& x : w) x /= total;
  d.source_weights.assign(n_out, w);
  return d;
}

DemandModel DemandModel::zero(const Topology& t) {
  DemandModel d;
  size_t n_out = t.outgoing_nodes().size();
  d.rates_per_hour.assign(n_out, 0.0);
  size_t n_st = t.storage_nodes().size();
  d.source_weights.assign(n_out, std::vector<double>(n_st, 1.0 / n_st));
  return d;
}

void DemandModel::validate(const Topology& t) const {
  if (rates_per_hour.size() != t.outgoing_nodes().size())
    throw ConfigError("demand rates: need one rate per outgoing point");
  if (source_weights.size() != t.outgoing_nodes().size())
    throw ConfigError("demand weights: need one weight row per outgoing point");
  for (double r : rates_per_hour)
    if (r < 0 || !std::isfinite(r))
      throw ConfigError("demand rates must be finite and >= 0");
  for (const auto& row : source_weights) {
    if (row.size() != t.storage_nodes().size())
      throw ConfigError("demand weight row length must match storage count");
    double sum = 0;
    for (double w : row) {
      if (w < 0) throw ConfigError("demand weights must be >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("demand weight rows must sum to 1");
  }
}

SimEngine::SimEngine(const Topology& topo, DemandModel demand, SimConfig cfg)
    : topo_(&topo), demand_(std::move(demand)), cfg_(cfg) {
  demand_.validate(topo);
  steps_per_hour_ =
      static_cast<int64_t>(std::llround(3600.0 / topo.resolution_s()));
  if (cfg_.total_pallets < 1)
    throw ConfigError("total_pallets must be >= 1");
  if (cfg_.episode_steps < 1)
    throw ConfigError("episode_steps must be >= 1");
}

SimState SimEngine::init(uint64_t seed) const {
  const auto& nodes = topo_->nodes();
  const auto& segs = topo_->segments();

  int64_t cells = topo_->loop_cell_count();
  if (cfg_.total_pallets > cells)
    throw ConfigError("pallet count " + std::to_string(cfg_.total_pallets) +
                      " exceeds loop belt capacity " + std::to_string(cells));

  SimState st;
  st.clock = 0;
  st.pallets.resize(cfg_.total_pallets);
  st.segment_pallets.resize(segs.size());
  st.node_buffers.resize(nodes.size());
  st.pending.resize(nodes.size());
  st.demand.resize(topo_->storage_nodes().size());
  st.heading_to_storage.assign(topo_->storage_nodes().size(), 0);
  st.shipping_from_storage.assign(topo_->storage_nodes().size(), 0);
  st.loop_pallets.assign(topo_->loop_count(), 0);
  st.demand_rng = Rng::derive(seed, kDemandStreamTag);

  // uniform placement over loop belt cells, sampled without replacement
  std::vector<std::pair<int32_t, int32_t>> all_cells;
  all_cells.reserve(cells);
  for (const auto& s : segs) {
    if (s.connecting) continue;
    for (int32_t off = 0; off < s.steps; ++off)
      all_cells.push_back({s.index, off});
  }
  Rng place = Rng::derive(seed, kInitStreamTag);
  for (int i = 0; i < cfg_.total_pallets; ++i) {
    size_t j = i + place.next_below(all_cells.size() - i);
    std::swap(all_cells[i], all_cells[j]);
  }
  all_cells.resize(cfg_.total_pallets);
  std::sort(all_cells.begin(), all_cells.end());

  for (int i = 0; i < cfg_.total_pallets; ++i) {
    Pallet& p = st.pallets[i];
    p.phase = Phase::CirculatingEmpty;
    p.segment = all_cells[i].first;
    p.offset = all_cells[i].second;
    st.loop_pallets[topo_->loop_of_segment(p.segment)] += 1;
  }
  // front of each segment deque = highest offset
  for (int i = cfg_.total_pallets - 1; i >= 0; --i)
    st.segment_pallets[st.pallets[i].segment].push_back(i);
  for (auto& q : st.segment_pallets) {
    std::sort(q.begin(), q.end(), [&](int a, int b) {
      return st.pallets[a].offset > st.pallets[b].offset;
    });
  }
  return st;
}

int SimEngine::storage_action_dim() const {
  return static_cast<int>(topo_->storage_nodes().size());
}

int SimEngine::storage_node_for_action(int action) const {
  return topo_->storage_nodes().at(action);
}

void SimEngine::validate_actions(
    const SimState& st,
    const std::vector<std::pair<int32_t, int32_t>>& actions) const {
  auto sorted = actions;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first == sorted[i - 1].first)
      throw RuntimeFailure("duplicate action for node '" +
                           topo_->nodes()[sorted[i].first].id + "'");
  for (const auto& [node, action] : sorted) {
    if (node < 0 || node >= static_cast<int>(topo_->nodes().size()))
      throw RuntimeFailure("action for unknown node index " +
                           std::to_string(node));
    const PendingDecision& pd = st.pending[node];
    const Node& nd = topo_->nodes()[node];
    if (pd.pallet < 0 || pd.answered)
      throw RuntimeFailure("unexpected action for node '" + nd.id +
                           "': no pending decision");
    if (nd.kind == NodeKind::Incoming) {
      if (action < 0 || action >= storage_action_dim())
        throw RuntimeFailure("receiving action " + std::to_string(action) +
                             " out of range [0, " +
                             std::to_string(storage_action_dim()) + ") at '" +
                             nd.id + "'");
    } else {
      if (action != 0 && action != 1)
        throw RuntimeFailure("junction action " + std::to_string(action) +
                             " out of range {0,1} at '" + nd.id + "'");
    }
  }
  for (const auto& pd : st.pending) {
    if (pd.pallet >= 0 && !pd.answered &&
        !std::binary_search(
            sorted.begin(), sorted.end(), std::make_pair(pd.node, int32_t(0)),
            [](const auto& a, const auto& b) { return a.first < b.first; }))
      throw RuntimeFailure("missing action for node '" +
                           topo_->nodes()[pd.node].id +
                           "' with a pending decision");
  }
}

void SimEngine::apply_actions(
    SimState& st,
    const std::vector<std::pair<int32_t, int32_t>>& actions) const {
  auto sorted = actions;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [node, action] : sorted) {
    PendingDecision& pd = st.pending[node];
    Pallet& p = st.pallets[pd.pallet];
    const Node& nd = topo_->nodes()[node];
    if (nd.kind == NodeKind::Incoming) {
      p.dest = storage_node_for_action(action);
      p.route = topo_->shortest_route(node, p.dest);
      p.route_pos = -1;
      st.heading_to_storage[action] += 1;
    } else {
      p.chosen_direction = action;
    }
    pd.answered = true;
    pd.action = action;
  }
}

void SimEngine::complete_service(SimState& st, int node, int pallet_id) const {
  const Node& nd = topo_->nodes()[node];
  Pallet& p = st.pallets[pallet_id];
  NodeBuffer& nb = st.node_buffers[node];
  switch (nd.kind) {
    case NodeKind::Incoming: {
      // goods supply is unbounded: every completed service loads the pallet
      // and raises a dispatch decision for this point's agent
      st.pending[node] = {node, pallet_id, st.clock, false, -1};
      break;
    }
    case NodeKind::Storage: {
      int order = topo_->storage_order(node);
      if (p.dest == node) {
        // receiving delivery unloaded
        st.counters.receiving += 1;
        st.counters.per_step_delta += 1;
        st.heading_to_storage[order] -= 1;
        p.dest = -1;
        p.route.clear();
        p.route_pos = -1;
        // freshly emptied pallet can serve pending demand immediately
        if (!st.demand[order].empty()) {
          p.claimed_outgoing = st.demand[order].front();
          st.demand[order].pop_front();
        }
      }
      if (p.claimed_outgoing >= 0) {
        p.dest = p.claimed_outgoing;
        p.claimed_outgoing = -1;
        p.source_storage = node;
        p.route = topo_->shortest_route(node, p.dest);
        p.route_pos = -1;
        st.shipping_from_storage[order] += 1;
      }
      break;
    }
    case NodeKind::Outgoing: {
      st.counters.shipping += 1;
      st.counters.per_step_delta += 1;
      st.shipping_from_storage[topo_->storage_order(p.source_storage)] -= 1;
      p.source_storage = -1;
      p.dest = -1;
      p.route.clear();
      p.route_pos = -1;
      break;
    }
    case NodeKind::Junction: {
      if (p.dest < 0) {
        // empty pallet: the junction agent picks its direction
        st.pending[node] = {node, pallet_id, st.clock, false, -1};
      }
      break;
    }
  }
  nb.head_done = true;
}

bool SimEngine::cell0_free(const SimState& st, int seg) const {
  const auto& q = st.segment_pallets[seg];
  return q.empty() || st.pallets[q.back()].offset > 0;
}

void SimEngine::enter_segment(SimState& st, int pallet_id, int seg,
                              int from_loop) const {
  Pallet& p = st.pallets[pallet_id];
  p.segment = seg;
  p.offset = 0;
  p.node = -1;
  p.moved_at = st.clock;
  st.segment_pallets[seg].push_back(pallet_id);
  int to_loop = topo_->loop_of_segment(seg);
  if (to_loop != from_loop) {
    st.loop_pallets[from_loop] -= 1;
    st.loop_pallets[to_loop] += 1;
  }
}

bool SimEngine::try_depart(SimState& st, int node, int pallet_id) const {
  const Node& nd = topo_->nodes()[node];
  Pallet& p = st.pallets[pallet_id];

  int exit_seg = -1;
  Phase exit_phase = Phase::CirculatingEmpty;

  if (nd.kind == NodeKind::Junction) {
    int dir0 = nd.out_segment;
    int dir1 = nd.connecting_segment;
    int want;
    if (p.dest >= 0) {
      if (p.route_pos + 1 >= static_cast<int>(p.route.size()))
        throw RuntimeFailure("route exhausted at junction '" + nd.id + "'");
      want = (p.route[p.route_pos + 1] == dir1) ? 1 : 0;
    } else {
      if (p.chosen_direction < 0) return false;  // decision not answered yet
      want = p.chosen_direction;
    }
    int use = want;
    if (want == 1 &&
        static_cast<int>(st.segment_pallets[dir1].size()) >=
            topo_->connecting_section_capacity()) {
      // crossing at capacity: fall back to the loop, or hold in place when
      // that entry is blocked as well
      if (cell0_free(st, dir0)) {
        st.override_log.push_back(
            {st.clock, node, 1, 0, OverrideCause::JunctionSectionFullRedirect});
        use = 0;
        if (p.dest >= 0) {
          std::vector<int32_t> detour = {dir0};
          for (int s :
               topo_->shortest_route(topo_->segments()[dir0].to, p.dest))
            detour.push_back(s);
          p.route = std::move(detour);
          p.route_pos = -1;
        }
      } else {
        if (!p.hold_logged) {
          st.override_log.push_back(
              {st.clock, node, want, -1, OverrideCause::JunctionSectionFullHold});
          p.hold_logged = true;
        }
        return false;
      }
    }
    exit_seg = (use == 1) ? dir1 : dir0;
    if (!cell0_free(st, exit_seg)) return false;
    if (p.dest >= 0) {
      p.route_pos += 1;
      exit_phase = (p.source_storage >= 0) ? Phase::InTransitLoadedShipping
                                           : Phase::InTransitLoadedReceiving;
    } else {
      exit_phase = Phase::InTransitEmptyDirected;
      p.chosen_direction = -1;
    }
  } else {
    if (p.dest >= 0) {
      // loaded pallets at a non-junction head always carry a fresh route
      if (p.route_pos + 1 >= static_cast<int>(p.route.size()))
        throw RuntimeFailure("route exhausted at '" + nd.id + "'");
      exit_seg = p.route[p.route_pos + 1];
    } else {
      if (nd.kind == NodeKind::Incoming) return false;  // awaiting dispatch
      exit_seg = nd.out_segment;
    }
    if (!cell0_free(st, exit_seg)) return false;
    if (p.dest >= 0) {
      p.route_pos += 1;
      exit_phase = (p.source_storage >= 0) ? Phase::InTransitLoadedShipping
                                           : Phase::InTransitLoadedReceiving;
    } else {
      exit_phase = Phase::CirculatingEmpty;
    }
  }

  p.hold_logged = false;
  p.phase = exit_phase;
  NodeBuffer& nb = st.node_buffers[node];
  nb.queue.pop_front();
  nb.head_done = false;
  st.pending[node] = PendingDecision{};
  enter_segment(st, pallet_id, exit_seg, nd.loop);
  if (!nb.queue.empty()) {
    nb.busy_until = st.clock + nd.processing_steps;
    st.pallets[nb.queue.front()].phase = Phase::Processing;
  }
  return true;
}

void SimEngine::node_phase(SimState& st) const {
  const auto& nodes = topo_->nodes();
  for (const auto& nd : nodes) {
    NodeBuffer& nb = st.node_buffers[nd.index];
    if (nb.queue.empty()) continue;
    int head = nb.queue.front();
    if (!nb.head_done && nb.busy_until <= st.clock)
      complete_service(st, nd.index, head);
    if (nb.head_done) try_depart(st, nd.index, head);
  }
}

void SimEngine::admit_to_node(SimState& st, int pallet_id, int node) const {
  const Node& nd = topo_->nodes()[node];
  Pallet& p = st.pallets[pallet_id];
  auto& seg_q = st.segment_pallets[p.segment];
  seg_q.pop_front();
  p.segment = -1;
  p.offset = 0;
  p.node = node;
  p.phase = Phase::Queued;
  NodeBuffer& nb = st.node_buffers[node];
  nb.queue.push_back(pallet_id);
  if (nb.queue.size() == 1) {
    nb.busy_until = st.clock + nd.processing_steps;
    p.phase = Phase::Processing;
  }
}

// Front pallet of `seg` sits on the last cell; route it into the node, past
// it, or leave it blocked. Returns true when the pallet left the segment.
bool SimEngine::handle_segment_exit(SimState& st, int seg) const {
  const Segment& s = topo_->segments()[seg];
  const Node& nd = topo_->nodes()[s.to];
  int pallet_id = st.segment_pallets[seg].front();
  Pallet& p = st.pallets[pallet_id];
  NodeBuffer& nb = st.node_buffers[s.to];

  const bool is_empty = p.dest < 0;
  bool wants_entry = false;
  bool claims_demand = false;

  switch (nd.kind) {
    case NodeKind::Junction:
      // junctions are in-line: everything passes through the transfer queue,
      // and a full queue backs the belt up
      if (static_cast<int>(nb.queue.size()) < nd.buffer_capacity) {
        admit_to_node(st, pallet_id, s.to);
        return true;
      }
      return false;
    case NodeKind::Incoming:
      wants_entry = is_empty;
      break;
    case NodeKind::Storage: {
      int order = topo_->storage_order(s.to);
      if (p.dest == s.to) {
        wants_entry = true;
      } else if (is_empty && !st.demand[order].empty()) {
        wants_entry = true;
        claims_demand = true;
      }
      break;
    }
    case NodeKind::Outgoing:
      wants_entry = (p.dest == s.to);
      break;
  }

  if (wants_entry) {
    if (static_cast<int>(nb.queue.size()) < nd.buffer_capacity) {
      if (claims_demand) {
        int order = topo_->storage_order(s.to);
        p.claimed_outgoing = st.demand[order].front();
        st.demand[order].pop_front();
      }
      admit_to_node(st, pallet_id, s.to);
      return true;
    }
    if (p.dest == s.to) {
      // destination buffer full: keep riding the loop and retry next pass
      int requested = (nd.kind == NodeKind::Storage)
                          ? topo_->storage_order(s.to)
                          : static_cast<int>(
                                std::find(topo_->outgoing_nodes().begin(),
                                          topo_->outgoing_nodes().end(), s.to) -
                                topo_->outgoing_nodes().begin());
      st.override_log.push_back(
          {st.clock, s.to, requested, -1, OverrideCause::BufferFullReroute});
      std::vector<int32_t> around = {nd.out_segment};
      for (int r :
           topo_->shortest_route(topo_->segments()[nd.out_segment].to, p.dest))
        around.push_back(r);
      p.route = std::move(around);
      p.route_pos = -1;
    }
    // fall through to pass the node on the belt
  }

  // pass through on the belt
  int next_seg;
  if (p.dest >= 0) {
    if (p.route_pos + 1 >= static_cast<int>(p.route.size()))
      throw RuntimeFailure("route exhausted passing '" + nd.id + "'");
    next_seg = p.route[p.route_pos + 1];
  } else {
    next_seg = nd.out_segment;
  }
  if (!cell0_free(st, next_seg)) return false;
  st.segment_pallets[seg].pop_front();
  if (p.dest >= 0)
    p.route_pos += 1;
  else
    p.phase = Phase::CirculatingEmpty;
  enter_segment(st, pallet_id, next_seg, nd.loop);
  return true;
}

void SimEngine::belt_phase(SimState& st) const {
  const auto& segs = topo_->segments();
  for (const auto& s : segs) {
    auto& q = st.segment_pallets[s.index];
    if (q.empty()) continue;
    int32_t ahead = kNoBlocker;
    size_t i = 0;
    {
      Pallet& f = st.pallets[q.front()];
      if (f.moved_at == st.clock) {
        ahead = f.offset;
        i = 1;
      } else if (f.offset == s.steps - 1) {
        if (handle_segment_exit(st, s.index)) {
          ahead = kNoBlocker;
          i = 0;  // new front handled by the generic loop below
        } else {
          ahead = f.offset;
          i = 1;
        }
      } else {
        f.offset += 1;
        f.moved_at = st.clock;
        ahead = f.offset;
        i = 1;
      }
    }
    for (; i < q.size(); ++i) {
      Pallet& p = st.pallets[q[i]];
      if (p.moved_at == st.clock) {
        ahead = p.offset;
        continue;
      }
      int32_t limit = (ahead == kNoBlocker) ? s.steps : ahead;
      if (p.offset + 1 < limit) {
        p.offset += 1;
        p.moved_at = st.clock;
      }
      ahead = p.offset;
    }
  }
}

void SimEngine::demand_phase(SimState& st) const {
  const auto& out_nodes = topo_->outgoing_nodes();
  for (size_t o = 0; o < out_nodes.size(); ++o) {
    double p = demand_.rates_per_hour[o] / static_cast<double>(steps_per_hour_);
    if (p > 0 && st.demand_rng.bernoulli(p)) {
      size_t s_order = st.demand_rng.weighted(demand_.source_weights[o]);
      st.demand[s_order].push_back(out_nodes[o]);
    }
  }
}

StepOutput SimEngine::step(
    SimState& st,
    const std::vector<std::pair<int32_t, int32_t>>& actions_by_node) const {
  validate_actions(st, actions_by_node);
  st.clock += 1;
  st.counters.per_step_delta = 0;
  apply_actions(st, actions_by_node);
  node_phase(st);
  belt_phase(st);
  demand_phase(st);

  StepOutput out;
  for (const auto& pd : st.pending)
    if (pd.pallet >= 0 && pd.raised_at == st.clock)
      out.new_decisions.push_back({pd.node, pd.pallet});
  out.throughput_delta = st.counters.per_step_delta;
  out.reward_delta = st.counters.per_step_delta * cfg_.reward_scale;
  return out;
}

FeatureCounts SimEngine::features(const SimState& st) const {
  FeatureCounts f;
  f.heading_to_storage = st.heading_to_storage;
  const auto& links = topo_->junction_links();
  f.junction_section.reserve(links.size());
  f.junction_dir0.reserve(links.size());
  for (const auto& link : links) {
    f.junction_section.push_back(
        static_cast<int32_t>(st.segment_pallets[link.dir1_segment].size()));
    f.junction_dir0.push_back(
        static_cast<int32_t>(st.segment_pallets[link.dir0_segment].size()));
  }
  f.out_minus_in.resize(st.heading_to_storage.size());
  for (size_t i = 0; i < f.out_minus_in.size(); ++i)
    f.out_minus_in[i] = st.shipping_from_storage[i] - st.heading_to_storage[i];
  return f;
}

int64_t SimEngine::run_episode(SimState& st, const PolicyCallback& policy,
                               std::vector<TraceRecord>* trace) const {
  std::vector<std::pair<int32_t, int32_t>> actions;
  std::vector<DecisionRequest> pending;
  while (st.clock < cfg_.episode_steps) {
    actions.clear();
    for (const auto& req : pending) {
      int32_t a = policy(st, req);
      actions.push_back({req.node, a});
    }
    size_t override_mark = st.override_log.size();
    StepOutput out = step(st, actions);
    if (trace) {
      for (const auto& [node, action] : actions)
        trace->push_back({st.clock, node, false, action, action, -1,
                          out.reward_delta});
      for (size_t i = override_mark; i < st.override_log.size(); ++i) {
        const auto& ov = st.override_log[i];
        trace->push_back({ov.step, ov.node, true, ov.requested, ov.applied,
                          static_cast<int32_t>(ov.cause), out.reward_delta});
      }
    }
    pending = std::move(out.new_decisions);
  }
  return st.counters.receiving + st.counters.shipping;
}

void SimEngine::check_invariants(const SimState& st) const {
  const auto& nodes = topo_->nodes();
  const auto& segs = topo_->segments();

  if (static_cast<int>(st.pallets.size()) != cfg_.total_pallets)
    throw RuntimeFailure("pallet count changed");

  std::vector<int> seen(st.pallets.size(), 0);
  for (size_t si = 0; si < st.segment_pallets.size(); ++si) {
    const auto& q = st.segment_pallets[si];
    int32_t prev = std::numeric_limits<int32_t>::max();
    for (int id : q) {
      const Pallet& p = st.pallets[id];
      if (p.segment != static_cast<int>(si))
        throw RuntimeFailure("segment membership mismatch");
      if (p.offset < 0 || p.offset >= segs[si].steps)
        throw RuntimeFailure("pallet offset out of segment bounds");
      if (p.offset >= prev)
        throw RuntimeFailure("segment deque out of order or cell collision");
      prev = p.offset;
      seen[id] += 1;
    }
  }
  for (const auto& nd : nodes) {
    const NodeBuffer& nb = st.node_buffers[nd.index];
    if (static_cast<int>(nb.queue.size()) > nd.buffer_capacity)
      throw RuntimeFailure("buffer capacity violated at '" + nd.id + "'");
    for (int id : nb.queue) {
      const Pallet& p = st.pallets[id];
      if (p.node != nd.index)
        throw RuntimeFailure("node queue membership mismatch");
      seen[id] += 1;
    }
  }
  for (size_t i = 0; i < seen.size(); ++i)
    if (seen[i] != 1)
      throw RuntimeFailure("pallet " + std::to_string(i) +
                           " appears in " + std::to_string(seen[i]) +
                           " places");

  // route bookkeeping: consecutive segments chain, and a routed pallet on
  // the belt sits on the segment its cursor names
  for (size_t i = 0; i < st.pallets.size(); ++i) {
    const Pallet& p = st.pallets[i];
    if (p.dest < 0) continue;
    if (p.route.empty())
      throw RuntimeFailure("loaded pallet " + std::to_string(i) +
                           " has no route");
    for (size_t k = 1; k < p.route.size(); ++k)
      if (segs[p.route[k - 1]].to != segs[p.route[k]].from)
        throw RuntimeFailure("pallet " + std::to_string(i) +
                             " carries a disconnected route");
    if (p.segment >= 0) {
      if (p.route_pos < 0 || p.route_pos >= static_cast<int>(p.route.size()) ||
          p.route[p.route_pos] != p.segment)
        throw RuntimeFailure("pallet " + std::to_string(i) +
                             " route cursor does not match its segment");
    }
  }

  // feature counters must equal recomputation from scratch
  std::vector<int32_t> heading(st.heading_to_storage.size(), 0);
  std::vector<int32_t> shipping(st.shipping_from_storage.size(), 0);
  std::vector<int32_t> loops(topo_->loop_count(), 0);
  for (const auto& p : st.pallets) {
    if (p.dest >= 0 && nodes[p.dest].kind == NodeKind::Storage)
      heading[topo_->storage_order(p.dest)] += 1;
    if (p.source_storage >= 0)
      shipping[topo_->storage_order(p.source_storage)] += 1;
    int loop = (p.segment >= 0) ? topo_->loop_of_segment(p.segment)
                                : nodes[p.node].loop;
    loops[loop] += 1;
  }
  if (heading != st.heading_to_storage)
    throw RuntimeFailure("heading_to_storage counter drift");
  if (shipping != st.shipping_from_storage)
    throw RuntimeFailure("shipping_from_storage counter drift");
  if (loops != st.loop_pallets)
    throw RuntimeFailure("loop pallet counter drift");
  if (st.counters.receiving < 0 || st.counters.shipping < 0)
    throw RuntimeFailure("negative throughput counter");
}

uint64_t state_fingerprint(const SimState& st) {
  std::vector<int64_t> words;
  words.push_back(st.clock);
  for (const auto& p : st.pallets) {
    words.push_back(static_cast<int64_t>(p.phase));
    words.push_back(p.segment);
    words.push_back(p.offset);
    words.push_back(p.node);
    words.push_back(p.dest);
    words.push_back(p.claimed_outgoing);
    words.push_back(p.source_storage);
    words.push_back(p.chosen_direction);
    words.push_back(p.route_pos);
    for (int r : p.route) words.push_back(r);
    words.push_back(p.moved_at);
  }
  for (const auto& q : st.segment_pallets)
    for (int id : q) words.push_back(id);
  for (const auto& nb : st.node_buffers) {
    words.push_back(nb.busy_until);
    words.push_back(nb.head_done);
    for (int id : nb.queue) words.push_back(id);
  }
  for (const auto& pd : st.pending) {
    words.push_back(pd.node);
    words.push_back(pd.pallet);
    words.push_back(pd.raised_at);
    words.push_back(pd.answered);
    words.push_back(pd.action);
  }
  for (const auto& dq : st.demand)
    for (int o : dq) words.push_back(o);
  words.push_back(st.counters.receiving);
  words.push_back(st.counters.shipping);
  for (auto w : st.demand_rng.state())
    words.push_back(static_cast<int64_t>(w));
  return fnv1a64(words.data(), words.size() * sizeof(int64_t));
}

}  // namespace mhs
