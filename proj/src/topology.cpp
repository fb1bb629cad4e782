#include "mhs/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace mhs {

namespace {
constexpr int64_t kUnreachable = -1;

std::string fmt_seconds(double s) {
  std::ostringstream out;
  out << s;
  return out.str();
}
}  // namespace

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Incoming: return "incoming";
    case NodeKind::Storage: return "storage";
    case NodeKind::Outgoing: return "outgoing";
    case NodeKind::Junction: return "junction";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "incoming") return NodeKind::Incoming;
  if (s == "storage") return NodeKind::Storage;
  if (s == "outgoing") return NodeKind::Outgoing;
  if (s == "junction") return NodeKind::Junction;
  throw SchemaError("unknown node kind '" + s + "'");
}

Topology Topology::default_preset() {
  // Point counts and per-kind timings follow the stock three-loop system:
  // 4 incoming (2/1/1 across loops), 20 storage (7/7/6), 6 outgoing (2/2/2),
  // 4 junctions forming loop0 <-> loop1 <-> loop2 with one crossing segment
  // per junction. Loop circumference 1200 steps split evenly between
  // consecutive nodes; crossings 100 steps.
  ConfigDoc doc;
  doc.add_row("loops", {"loop0"});
  doc.add_row("loops", {"loop1"});
  doc.add_row("loops", {"loop2"});

  auto node = [&](const std::string& id, const std::string& kind,
                  const std::string& loop, int buffer, double proc_s) {
    doc.add_row("nodes", {id, kind, loop, std::to_string(buffer),
                          fmt_seconds(proc_s)});
  };
  // loop0: 12 nodes
  node("in0", "incoming", "loop0", 4, 5.0);
  node("s00", "storage", "loop0", 8, 10.0);
  node("s01", "storage", "loop0", 8, 10.0);
  node("s02", "storage", "loop0", 8, 10.0);
  node("j0", "junction", "loop0", 10, 0.5);
  node("s03", "storage", "loop0", 8, 10.0);
  node("out0", "outgoing", "loop0", 10, 6.0);
  node("in1", "incoming", "loop0", 4, 5.0);
  node("s04", "storage", "loop0", 8, 10.0);
  node("s05", "storage", "loop0", 8, 10.0);
  node("s06", "storage", "loop0", 8, 10.0);
  node("out1", "outgoing", "loop0", 10, 6.0);
  // loop1: 12 nodes
  node("j1", "junction", "loop1", 10, 0.5);
  node("in2", "incoming", "loop1", 4, 5.0);
  node("s07", "storage", "loop1", 8, 10.0);
  node("s08", "storage", "loop1", 8, 10.0);
  node("s09", "storage", "loop1", 8, 10.0);
  node("out2", "outgoing", "loop1", 10, 6.0);
  node("s10", "storage", "loop1", 8, 10.0);
  node("j2", "junction", "loop1", 10, 0.5);
  node("s11", "storage", "loop1", 8, 10.0);
  node("s12", "storage", "loop1", 8, 10.0);
  node("s13", "storage", "loop1", 8, 10.0);
  node("out3", "outgoing", "loop1", 10, 6.0);
  // loop2: 10 nodes
  node("j3", "junction", "loop2", 10, 0.5);
  node("in3", "incoming", "loop2", 4, 5.0);
  node("s14", "storage", "loop2", 8, 10.0);
  node("s15", "storage", "loop2", 8, 10.0);
  node("s16", "storage", "loop2", 8, 10.0);
  node("out4", "outgoing", "loop2", 10, 6.0);
  node("s17", "storage", "loop2", 8, 10.0);
  node("s18", "storage", "loop2", 8, 10.0);
  node("s19", "storage", "loop2", 8, 10.0);
  node("out5", "outgoing", "loop2", 10, 6.0);

  const std::vector<std::vector<std::string>> loops = {
      {"in0", "s00", "s01", "s02", "j0", "s03", "out0", "in1", "s04", "s05",
       "s06", "out1"},
      {"j1", "in2", "s07", "s08", "s09", "out2", "s10", "j2", "s11", "s12",
       "s13", "out3"},
      {"j3", "in3", "s14", "s15", "s16", "out4", "s17", "s18", "s19", "out5"},
  };
  const int circumference = 1200;
  for (const auto& cycle : loops) {
    int steps = circumference / static_cast<int>(cycle.size());
    for (size_t i = 0; i < cycle.size(); ++i) {
      const std::string& a = cycle[i];
      const std::string& b = cycle[(i + 1) % cycle.size()];
      doc.add_row("segments", {a + "-" + b, a, b, std::to_string(steps)});
    }
  }
  doc.add_row("segments", {"j0-j1", "j0", "j1", "100"});
  doc.add_row("segments", {"j1-j0", "j1", "j0", "100"});
  doc.add_row("segments", {"j2-j3", "j2", "j3", "100"});
  doc.add_row("segments", {"j3-j2", "j3", "j2", "100"});

  doc.add_row("junctions", {"j0", "j0-s03", "j0-j1"});
  doc.add_row("junctions", {"j1", "j1-in2", "j1-j0"});
  doc.add_row("junctions", {"j2", "j2-s11", "j2-j3"});
  doc.add_row("junctions", {"j3", "j3-in3", "j3-j2"});

  doc.set("limits", "connecting_section_capacity", "10");
  doc.set("limits", "resolution_s", "0.1");
  return from_document(doc);
}

Topology Topology::from_document(const ConfigDoc& doc) {
  Topology t;
  t.resolution_s_ = doc.get_double("limits", "resolution_s", 0.1);
  if (t.resolution_s_ <= 0) throw SchemaError("resolution_s must be > 0");
  t.section_capacity_ = static_cast<int>(
      doc.get_int("limits", "connecting_section_capacity", 10));
  if (t.section_capacity_ < 1)
    throw SchemaError("connecting_section_capacity must be >= 1");

  if (!doc.has_section("loops") || doc.section("loops").rows.empty())
    throw SchemaError("layout needs a [loops] section with at least one loop");
  for (const auto& row : doc.section("loops").rows) {
    if (row.size() != 1) throw SchemaError("[loops] rows carry a single id");
    if (std::find(t.loop_ids_.begin(), t.loop_ids_.end(), row[0]) !=
        t.loop_ids_.end())
      throw SchemaError("duplicate loop id '" + row[0] + "'");
    t.loop_ids_.push_back(row[0]);
  }
  auto loop_index = [&](const std::string& id) {
    auto it = std::find(t.loop_ids_.begin(), t.loop_ids_.end(), id);
    if (it == t.loop_ids_.end())
      throw SchemaError("unknown loop id '" + id + "'");
    return static_cast<int>(it - t.loop_ids_.begin());
  };

  if (!doc.has_section("nodes"))
    throw SchemaError("layout needs a [nodes] section");
  for (const auto& row : doc.section("nodes").rows) {
    if (row.size() != 5)
      throw SchemaError("[nodes] row needs: id kind loop buffer proc_time_s");
    Node n;
    n.index = static_cast<int>(t.nodes_.size());
    n.id = row[0];
    n.kind = node_kind_from_string(row[1]);
    n.loop = loop_index(row[2]);
    n.buffer_capacity = std::stoi(row[3]);
    double proc_s = std::stod(row[4]);
    n.processing_steps =
        static_cast<int>(std::llround(proc_s / t.resolution_s_));
    if (n.kind == NodeKind::Junction) n.buffer_capacity = t.section_capacity_;
    if (n.buffer_capacity < 1)
      throw SchemaError("node '" + n.id + "': buffer capacity must be >= 1");
    if (n.processing_steps < 1)
      throw SchemaError("node '" + n.id + "': processing time below one step");
    for (const auto& other : t.nodes_)
      if (other.id == n.id)
        throw SchemaError("duplicate node id '" + n.id + "'");
    t.nodes_.push_back(n);
  }

  if (!doc.has_section("segments"))
    throw SchemaError("layout needs a [segments] section");
  for (const auto& row : doc.section("segments").rows) {
    if (row.size() != 4)
      throw SchemaError("[segments] row needs: id from to steps");
    Segment s;
    s.index = static_cast<int>(t.segments_.size());
    s.id = row[0];
    s.from = t.node_by_id(row[1]);
    s.to = t.node_by_id(row[2]);
    s.steps = std::stoi(row[3]);
    if (s.steps < 1)
      throw SchemaError("segment '" + s.id + "': steps must be >= 1");
    for (const auto& other : t.segments_)
      if (other.id == s.id)
        throw SchemaError("duplicate segment id '" + s.id + "'");
    s.connecting = t.nodes_[s.from].loop != t.nodes_[s.to].loop;
    s.loop = t.nodes_[s.to].loop;
    if (!s.connecting) s.loop = t.nodes_[s.from].loop;
    t.segments_.push_back(s);
  }

  if (doc.has_section("junctions")) {
    for (const auto& row : doc.section("junctions").rows) {
      if (row.size() != 3)
        throw SchemaError("[junctions] row needs: id dir0_segment dir1_segment");
      JunctionLink link;
      link.node = t.node_by_id(row[0]);
      link.dir0_segment = t.segment_by_id(row[1]);
      link.dir1_segment = t.segment_by_id(row[2]);
      t.links_.push_back(link);
    }
  }

  t.finalize();
  return t;
}

// Both lookups run before the index tables exist, so they scan; fine at
// layout sizes.
int Topology::node_by_id(const std::string& id) const {
  for (const auto& n : nodes_)
    if (n.id == id) return n.index;
  throw SchemaError("unknown node id '" + id + "'");
}

int Topology::segment_by_id(const std::string& id) const {
  for (const auto& s : segments_)
    if (s.id == id) return s.index;
  throw SchemaError("unknown segment id '" + id + "'");
}

ConfigDoc Topology::to_document() const {
  ConfigDoc doc;
  for (const auto& id : loop_ids_) doc.add_row("loops", {id});
  for (const auto& n : nodes_) {
    doc.add_row("nodes",
                {n.id, to_string(n.kind), loop_ids_[n.loop],
                 std::to_string(n.buffer_capacity),
                 fmt_seconds(n.processing_steps * resolution_s_)});
  }
  for (const auto& s : segments_) {
    doc.add_row("segments", {s.id, nodes_[s.from].id, nodes_[s.to].id,
                             std::to_string(s.steps)});
  }
  for (const auto& link : links_) {
    doc.add_row("junctions",
                {nodes_[link.node].id, segments_[link.dir0_segment].id,
                 segments_[link.dir1_segment].id});
  }
  doc.set("limits", "connecting_section_capacity",
          std::to_string(section_capacity_));
  doc.set("limits", "resolution_s", fmt_seconds(resolution_s_));
  return doc;
}

void Topology::finalize() {
  const int n = static_cast<int>(nodes_.size());
  out_segments_.assign(n, {});
  std::vector<std::vector<int>> out_loop_segs(n), out_conn_segs(n);
  std::vector<int> in_loop_deg(n, 0);
  for (const auto& s : segments_) {
    out_segments_[s.from].push_back(s.index);
    if (s.connecting)
      out_conn_segs[s.from].push_back(s.index);
    else {
      out_loop_segs[s.from].push_back(s.index);
      ++in_loop_deg[s.to];
    }
  }

  storage_order_.assign(n, -1);
  for (const auto& node : nodes_) {
    switch (node.kind) {
      case NodeKind::Incoming: incoming_.push_back(node.index); break;
      case NodeKind::Storage:
        storage_order_[node.index] = static_cast<int>(storage_.size());
        storage_.push_back(node.index);
        break;
      case NodeKind::Outgoing: outgoing_.push_back(node.index); break;
      case NodeKind::Junction: junctions_.push_back(node.index); break;
    }
  }

  // belt continuation: exactly one loop segment out of every node
  for (auto& node : nodes_) {
    if (out_loop_segs[node.index].size() != 1)
      throw SchemaError("node '" + node.id +
                        "' must have exactly one outgoing loop segment, has " +
                        std::to_string(out_loop_segs[node.index].size()));
    node.out_segment = out_loop_segs[node.index][0];
    if (in_loop_deg[node.index] != 1)
      throw SchemaError("node '" + node.id +
                        "' must have exactly one incoming loop segment");
    if (node.kind == NodeKind::Junction) {
      if (out_conn_segs[node.index].size() != 1)
        throw SchemaError("junction '" + node.id +
                          "' must own exactly one connecting segment");
      node.connecting_segment = out_conn_segs[node.index][0];
    } else if (!out_conn_segs[node.index].empty()) {
      throw SchemaError("node '" + node.id +
                        "' is not a junction but has a connecting segment");
    }
  }

  // junction link rows must cover every junction and agree with the graph
  if (links_.size() != junctions_.size())
    throw SchemaError("[junctions] must list every junction node exactly once");
  std::set<int> seen;
  for (auto& link : links_) {
    const Node& node = nodes_[link.node];
    if (node.kind != NodeKind::Junction)
      throw SchemaError("node '" + node.id + "' in [junctions] is not a junction");
    if (!seen.insert(link.node).second)
      throw SchemaError("junction '" + node.id + "' listed twice");
    if (link.dir0_segment != node.out_segment)
      throw SchemaError("junction '" + node.id +
                        "': dir0 must be its outgoing loop segment");
    if (link.dir1_segment != node.connecting_segment)
      throw SchemaError("junction '" + node.id +
                        "': dir1 must be its connecting segment");
    segments_[link.dir1_segment].owner_junction = link.node;
  }

  // every loop's segments form one directed cycle covering its nodes
  loop_cycles_.assign(loop_ids_.size(), {});
  for (int loop = 0; loop < loop_count(); ++loop) {
    int start = -1;
    int member_count = 0;
    for (const auto& node : nodes_)
      if (node.loop == loop) {
        ++member_count;
        if (start < 0) start = node.index;
      }
    if (member_count == 0)
      throw SchemaError("loop '" + loop_ids_[loop] + "' has no nodes");
    int cur = start;
    std::vector<int>& cycle = loop_cycles_[loop];
    for (int hops = 0; hops < member_count; ++hops) {
      int seg = nodes_[cur].out_segment;
      if (nodes_[segments_[seg].to].loop != loop)
        throw SchemaError("segment '" + segments_[seg].id +
                          "' leaves loop '" + loop_ids_[loop] + "'");
      cycle.push_back(seg);
      cur = segments_[seg].to;
    }
    if (cur != start)
      throw SchemaError("loop '" + loop_ids_[loop] +
                        "' segments do not close a single cycle");
  }

  // all-pairs shortest distances over segment steps (Dijkstra per source)
  dist_.assign(n, std::vector<int64_t>(n, kUnreachable));
  for (int src = 0; src < n; ++src) {
    auto& d = dist_[src];
    d[src] = 0;
    using Item = std::pair<int64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.push({0, src});
    while (!pq.empty()) {
      auto [cost, u] = pq.top();
      pq.pop();
      if (cost != d[u]) continue;
      for (int seg : out_segments_[u]) {
        int v = segments_[seg].to;
        int64_t nd = cost + segments_[seg].steps;
        if (d[v] == kUnreachable || nd < d[v]) {
          d[v] = nd;
          pq.push({nd, v});
        }
      }
    }
  }

  for (int in : incoming_)
    for (int st : storage_)
      if (dist_[in][st] == kUnreachable)
        throw SchemaError("storage '" + nodes_[st].id +
                          "' unreachable from incoming '" + nodes_[in].id + "'");
}

int64_t Topology::loop_cell_count() const {
  int64_t cells = 0;
  for (const auto& s : segments_)
    if (!s.connecting) cells += s.steps;
  return cells;
}

int64_t Topology::route_cost(int from, int to) const {
  return dist_[from][to];
}

std::vector<int> Topology::shortest_route(int from, int to) const {
  if (from < 0 || from >= static_cast<int>(nodes_.size()) || to < 0 ||
      to >= static_cast<int>(nodes_.size()))
    throw RuntimeFailure("shortest_route: node index out of range");
  if (dist_[from][to] == kUnreachable)
    throw RuntimeFailure("no route from '" + nodes_[from].id + "' to '" +
                         nodes_[to].id + "'");
  std::vector<int> route;
  int cur = from;
  while (cur != to) {
    int best = -1;
    for (int seg : out_segments_[cur]) {
      int v = segments_[seg].to;
      if (dist_[v][to] == kUnreachable) continue;
      if (segments_[seg].steps + dist_[v][to] != dist_[cur][to]) continue;
      if (best < 0 || segments_[seg].id < segments_[best].id) best = seg;
    }
    route.push_back(best);
    cur = segments_[best].to;
  }
  return route;
}

int Topology::loop_membership(int node) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    throw RuntimeFailure("loop_membership: unknown node index " +
                         std::to_string(node));
  return nodes_[node].loop;
}

std::vector<int> Topology::same_loop_storages(int incoming_node) const {
  if (incoming_node < 0 || incoming_node >= static_cast<int>(nodes_.size()))
    throw RuntimeFailure("same_loop_storages: unknown node index " +
                         std::to_string(incoming_node));
  if (nodes_[incoming_node].kind != NodeKind::Incoming)
    throw RuntimeFailure("same_loop_storages: node '" +
                         nodes_[incoming_node].id + "' is not an incoming point");
  std::vector<int> out;
  for (int st : storage_)
    if (nodes_[st].loop == nodes_[incoming_node].loop) out.push_back(st);
  return out;
}

}  // namespace mhs
