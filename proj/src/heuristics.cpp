#include "mhs/heuristics.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "mhs/errors.hpp"

namespace mhs {

namespace {

// hop distance between loops over the crossing graph
std::vector<std::vector<int>> loop_hops(const Topology& t) {
  int n = t.loop_count();
  std::vector<std::vector<int>> adj(n);
  for (const auto& s : t.segments()) {
    if (!s.connecting) continue;
    int a = t.nodes()[s.from].loop;
    int b = t.nodes()[s.to].loop;
    adj[a].push_back(b);
  }
  std::vector<std::vector<int>> d(n, std::vector<int>(n, -1));
  for (int src = 0; src < n; ++src) {
    std::queue<int> q;
    d[src][src] = 0;
    q.push(src);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (d[src][v] < 0) {
          d[src][v] = d[src][u] + 1;
          q.push(v);
        }
    }
  }
  return d;
}

std::vector<int> storages_on_loop(const DispatchContext& ctx, int loop) {
  std::vector<int> out;
  const auto& storages = ctx.topo->storage_nodes();
  for (size_t k = 0; k < storages.size(); ++k)
    if (ctx.topo->nodes()[storages[k]].loop == loop)
      out.push_back(static_cast<int>(k));
  return out;
}

int argmin_by(const std::vector<int>& actions,
              const std::function<double(int)>& key) {
  int best = actions.front();
  double best_v = key(best);
  for (size_t i = 1; i < actions.size(); ++i) {
    double v = key(actions[i]);
    if (v < best_v) {
      best = actions[i];
      best_v = v;
    }
  }
  return best;
}

}  // namespace

HeuristicParams HeuristicParams::defaults(const Topology& t) {
  HeuristicParams p;
  auto hops = loop_hops(t);
  int n = t.loop_count();
  p.loop_cost.assign(n, std::vector<double>(n, 0.5));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (hops[i][j] >= 0) p.loop_cost[i][j] = 0.25 * std::min(hops[i][j], 2);
  return p;
}

HeuristicParams HeuristicParams::from_config(const ConfigDoc& doc,
                                             const Topology& t) {
  HeuristicParams p = defaults(t);
  p.c1_medium = doc.get_double("heuristics", "c1_medium", p.c1_medium);
  p.c1_high = doc.get_double("heuristics", "c1_high", p.c1_high);
  p.c2_high = doc.get_double("heuristics", "c2_high", p.c2_high);
  p.c3_high = doc.get_double("heuristics", "c3_high", p.c3_high);
  if (doc.has_key("heuristics", "cost_matrix")) {
    auto flat = doc.get_double_list("heuristics", "cost_matrix", {});
    int n = t.loop_count();
    if (static_cast<int>(flat.size()) != n * n)
      throw ConfigError("cost_matrix needs loop_count^2 entries");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) p.loop_cost[i][j] = flat[i * n + j];
  }
  for (const auto& row : p.loop_cost)
    for (double c : row)
      if (c < 0) throw ConfigError("cost_matrix entries must be >= 0");
  return p;
}

DispatchContext build_dispatch_context(const Topology& t, const SimState& st,
                                       int node, Rng* rng) {
  DispatchContext ctx;
  ctx.topo = &t;
  ctx.node = node;
  ctx.node_loop = t.nodes()[node].loop;
  ctx.in_counts = st.heading_to_storage;
  ctx.out_counts = st.shipping_from_storage;
  ctx.loop_assigned.assign(t.loop_count(), 0);
  const auto& storages = t.storage_nodes();
  for (size_t k = 0; k < storages.size(); ++k)
    ctx.loop_assigned[t.nodes()[storages[k]].loop] += st.heading_to_storage[k];
  ctx.loop_physical = st.loop_pallets;
  ctx.rng = rng;
  return ctx;
}

int heuristic_low(const DispatchContext& ctx) {
  std::vector<int> same = storages_on_loop(ctx, ctx.node_loop);
  if (same.empty())
    throw RuntimeFailure("heuristic_low: no storage on the incoming loop");
  return same[ctx.rng->next_below(same.size())];
}

double min_cost_value(double x_loop, double x_min, double x_max, double c) {
  double spread = x_max - x_min;
  double load = spread > 0 ? (x_loop - x_min) / spread : 0.0;
  return load + c;
}

int min_cost_loop(const DispatchContext& ctx,
                  const std::vector<int>& candidate_loops,
                  const HeuristicParams& params) {
  if (candidate_loops.empty())
    throw RuntimeFailure("min_cost_loop: empty candidate set");
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -std::numeric_limits<double>::infinity();
  for (int32_t x : ctx.loop_assigned) {
    x_min = std::min(x_min, static_cast<double>(x));
    x_max = std::max(x_max, static_cast<double>(x));
  }
  int best = candidate_loops.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (int loop : candidate_loops) {
    double cost = min_cost_value(ctx.loop_assigned[loop], x_min, x_max,
                                 params.loop_cost[ctx.node_loop][loop]);
    if (cost < best_cost || (cost == best_cost && loop < best)) {
      best_cost = cost;
      best = loop;
    }
  }
  return best;
}

int heuristic_medium(const DispatchContext& ctx,
                     const HeuristicParams& params) {
  const int n = static_cast<int>(ctx.in_counts.size());
  std::vector<int> survivors;
  for (int k = 0; k < n; ++k)
    if (ctx.in_counts[k] <= params.c1_medium) survivors.push_back(k);
  if (survivors.empty()) {
    // the rule assumes a nonempty filter result; a running system must
    // still dispatch, so fall back to the unfiltered set
    survivors.resize(n);
    for (int k = 0; k < n; ++k) survivors[k] = k;
  }

  std::vector<int> loops;
  for (int loop = 0; loop < ctx.topo->loop_count(); ++loop)
    for (int k : survivors)
      if (ctx.topo->nodes()[ctx.topo->storage_nodes()[k]].loop == loop) {
        loops.push_back(loop);
        break;
      }
  int loop = min_cost_loop(ctx, loops, params);

  std::vector<int> in_loop;
  for (int k : survivors)
    if (ctx.topo->nodes()[ctx.topo->storage_nodes()[k]].loop == loop)
      in_loop.push_back(k);
  if (in_loop.size() == 1) return in_loop[0];
  return argmin_by(in_loop, [&](int k) { return ctx.in_counts[k]; });
}

int heuristic_high(const DispatchContext& ctx, const HeuristicParams& params) {
  const int n = static_cast<int>(ctx.in_counts.size());
  double x_same = ctx.loop_assigned[ctx.node_loop];
  double x_other = 0;
  for (int loop = 0; loop < ctx.topo->loop_count(); ++loop)
    if (loop != ctx.node_loop) x_other += ctx.loop_assigned[loop];

  enum class Pick { All, Same, Other };
  Pick pick = Pick::All;
  if (x_same < params.c1_high && x_other < params.c2_high)
    pick = Pick::All;
  else if (x_same < params.c1_high && x_other > params.c2_high)
    pick = Pick::Same;
  else if (x_same > params.c1_high && x_other < params.c2_high)
    pick = Pick::Other;
  else
    pick = Pick::All;

  std::vector<int> selected;
  for (int k = 0; k < n; ++k) {
    int loop = ctx.topo->nodes()[ctx.topo->storage_nodes()[k]].loop;
    bool same = loop == ctx.node_loop;
    if (pick == Pick::All || (pick == Pick::Same && same) ||
        (pick == Pick::Other && !same))
      selected.push_back(k);
  }
  if (selected.empty()) {
    selected.resize(n);
    for (int k = 0; k < n; ++k) selected[k] = k;
  }

  std::vector<int> filtered;
  for (int k : selected)
    if (ctx.in_counts[k] <= params.c3_high) filtered.push_back(k);
  if (filtered.empty()) filtered = selected;  // same fallback as Medium

  // prefer own-loop members when any survived the filter
  std::vector<int> own;
  for (int k : filtered)
    if (ctx.topo->nodes()[ctx.topo->storage_nodes()[k]].loop == ctx.node_loop)
      own.push_back(k);
  if (!own.empty()) filtered = own;

  if (filtered.size() == 1) return filtered[0];
  return argmin_by(filtered, [&](int k) {
    return static_cast<double>(ctx.out_counts[k] - ctx.in_counts[k]);
  });
}

int junction_least_pallets(const DispatchContext& ctx) {
  const Node& nd = ctx.topo->nodes()[ctx.node];
  if (nd.kind != NodeKind::Junction)
    throw RuntimeFailure("junction_least_pallets: node '" + nd.id +
                         "' is not a junction");
  int loop0 = nd.loop;
  int loop1 = ctx.topo->loop_of_segment(nd.connecting_segment);
  return ctx.loop_physical[loop1] < ctx.loop_physical[loop0] ? 1 : 0;
}

int random_baseline(const DispatchContext& ctx) {
  size_t n = ctx.in_counts.size();
  if (n == 0) throw RuntimeFailure("random_baseline: no storage points");
  return static_cast<int>(ctx.rng->next_below(n));
}

AgentHeuristic frozen_policy_heuristic(Mlp actor, int expected_action_dim,
                                       int expected_obs_dim) {
  if (actor.output_dim() != expected_action_dim)
    throw RuntimeFailure("frozen policy: action dim " +
                         std::to_string(actor.output_dim()) +
                         " does not match agent action dim " +
                         std::to_string(expected_action_dim));
  if (actor.input_dim() != expected_obs_dim)
    throw RuntimeFailure("frozen policy: input dim " +
                         std::to_string(actor.input_dim()) +
                         " does not match observation dim " +
                         std::to_string(expected_obs_dim));
  return [net = std::move(actor)](const DispatchContext&,
                                  const Observation& obs) {
    auto logits = forward(net, obs);
    return argmax(logits);
  };
}

AgentHeuristic frozen_policy_heuristic_from_file(const std::string& path,
                                                 int expected_action_dim,
                                                 int expected_obs_dim,
                                                 uint64_t expected_caps_hash) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.meta.caps_hash != expected_caps_hash)
    throw RuntimeFailure(
        "frozen policy: checkpoint '" + path +
        "' was trained under different observation normalization caps");
  return frozen_policy_heuristic(std::move(ck.net), expected_action_dim,
                                 expected_obs_dim);
}

AgentHeuristic named_receiving_heuristic(const std::string& name,
                                         const HeuristicParams& params) {
  if (name == "random")
    return [](const DispatchContext& ctx, const Observation&) {
      return random_baseline(ctx);
    };
  if (name == "low")
    return [](const DispatchContext& ctx, const Observation&) {
      return heuristic_low(ctx);
    };
  if (name == "medium")
    return [params](const DispatchContext& ctx, const Observation&) {
      return heuristic_medium(ctx, params);
    };
  if (name == "high")
    return [params](const DispatchContext& ctx, const Observation&) {
      return heuristic_high(ctx, params);
    };
  throw ConfigError("unknown heuristic '" + name +
                    "' (expected random|low|medium|high)");
}

}  // namespace mhs
