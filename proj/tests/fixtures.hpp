#pragma once

#include <algorithm>
#include <string>

#include "mhs/sim.hpp"
#include "mhs/topology.hpp"

namespace mhs::test {

// Single loop, no junctions: in0 -> sA -> sB -> out0 -> in0, 10-step belts.
inline Topology single_loop() {
  ConfigDoc doc;
  doc.add_row("loops", {"loop0"});
  doc.add_row("nodes", {"in0", "incoming", "loop0", "2", "0.5"});
  doc.add_row("nodes", {"sA", "storage", "loop0", "2", "1.0"});
  doc.add_row("nodes", {"sB", "storage", "loop0", "2", "1.0"});
  doc.add_row("nodes", {"out0", "outgoing", "loop0", "2", "0.6"});
  doc.add_row("segments", {"in0-sA", "in0", "sA", "10"});
  doc.add_row("segments", {"sA-sB", "sA", "sB", "10"});
  doc.add_row("segments", {"sB-out0", "sB", "out0", "10"});
  doc.add_row("segments", {"out0-in0", "out0", "in0", "10"});
  doc.set("limits", "connecting_section_capacity", "2");
  doc.set("limits", "resolution_s", "0.1");
  return Topology::from_document(doc);
}

// Two loops joined by one crossing pair, small section capacity (2).
// loop0: in0 -> s0 -> j0 -> out0; loop1: j1 -> s1 -> out1.
inline Topology two_loop() {
  ConfigDoc doc;
  doc.add_row("loops", {"loop0"});
  doc.add_row("loops", {"loop1"});
  doc.add_row("nodes", {"in0", "incoming", "loop0", "2", "0.5"});
  doc.add_row("nodes", {"s0", "storage", "loop0", "2", "1.0"});
  doc.add_row("nodes", {"j0", "junction", "loop0", "2", "0.5"});
  doc.add_row("nodes", {"out0", "outgoing", "loop0", "2", "0.6"});
  doc.add_row("nodes", {"j1", "junction", "loop1", "2", "0.5"});
  doc.add_row("nodes", {"s1", "storage", "loop1", "2", "1.0"});
  doc.add_row("nodes", {"out1", "outgoing", "loop1", "2", "0.6"});
  doc.add_row("segments", {"in0-s0", "in0", "s0", "10"});
  doc.add_row("segments", {"s0-j0", "s0", "j0", "10"});
  doc.add_row("segments", {"j0-out0", "j0", "out0", "10"});
  doc.add_row("segments", {"out0-in0", "out0", "in0", "10"});
  doc.add_row("segments", {"j1-s1", "j1", "s1", "10"});
  doc.add_row("segments", {"s1-out1", "s1", "out1", "10"});
  doc.add_row("segments", {"out1-j1", "out1", "j1", "10"});
  doc.add_row("segments", {"j0-j1", "j0", "j1", "10"});
  doc.add_row("segments", {"j1-j0", "j1", "j0", "10"});
  doc.add_row("junctions", {"j0", "j0-out0", "j0-j1"});
  doc.add_row("junctions", {"j1", "j1-s1", "j1-j0"});
  doc.set("limits", "connecting_section_capacity", "2");
  doc.set("limits", "resolution_s", "0.1");
  return Topology::from_document(doc);
}

// Recompute the incrementally-maintained counters from pallet fields after
// hand-placing pallets in a fixture.
inline void rebuild_counters(SimState& st, const Topology& t) {
  std::fill(st.heading_to_storage.begin(), st.heading_to_storage.end(), 0);
  std::fill(st.shipping_from_storage.begin(), st.shipping_from_storage.end(), 0);
  std::fill(st.loop_pallets.begin(), st.loop_pallets.end(), 0);
  for (const auto& p : st.pallets) {
    if (p.dest >= 0 && t.nodes()[p.dest].kind == NodeKind::Storage)
      st.heading_to_storage[t.storage_order(p.dest)] += 1;
    if (p.source_storage >= 0)
      st.shipping_from_storage[t.storage_order(p.source_storage)] += 1;
    int loop =
        (p.segment >= 0) ? t.loop_of_segment(p.segment) : t.nodes()[p.node].loop;
    st.loop_pallets[loop] += 1;
  }
}

inline void detach(SimState& st, int id) {
  Pallet& p = st.pallets[id];
  if (p.segment >= 0) {
    auto& q = st.segment_pallets[p.segment];
    q.erase(std::find(q.begin(), q.end(), id));
  } else if (p.node >= 0) {
    auto& q = st.node_buffers[p.node].queue;
    q.erase(std::find(q.begin(), q.end(), id));
  }
  p.segment = -1;
  p.node = -1;
}

inline void place_on_segment(SimState& st, const Topology& t, int id, int seg,
                             int offset, Phase phase) {
  detach(st, id);
  Pallet& p = st.pallets[id];
  p.segment = seg;
  p.offset = offset;
  p.phase = phase;
  auto& q = st.segment_pallets[seg];
  auto it = q.begin();
  while (it != q.end() && st.pallets[*it].offset > offset) ++it;
  q.insert(it, id);
  rebuild_counters(st, t);
}

inline void place_in_queue(SimState& st, const Topology& t, int id, int node,
                           int64_t busy_until) {
  detach(st, id);
  Pallet& p = st.pallets[id];
  p.node = node;
  auto& nb = st.node_buffers[node];
  nb.queue.push_back(id);
  p.phase = nb.queue.size() == 1 ? Phase::Processing : Phase::Queued;
  if (nb.queue.size() == 1) nb.busy_until = busy_until;
  rebuild_counters(st, t);
}

inline int seg_id(const Topology& t, const std::string& id) {
  for (const auto& s : t.segments())
    if (s.id == id) return s.index;
  throw std::runtime_error("fixture: unknown segment " + id);
}

}  // namespace mhs::test
