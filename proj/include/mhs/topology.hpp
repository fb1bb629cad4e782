#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhs/config.hpp"
#include "mhs/errors.hpp"

namespace mhs {

enum class NodeKind { Incoming, Storage, Outgoing, Junction };

const char* to_string(NodeKind k);
NodeKind node_kind_from_string(const std::string& s);

struct Node {
  int index = -1;
  std::string id;
  NodeKind kind = NodeKind::Storage;
  int loop = -1;
  int buffer_capacity = 1;
  int processing_steps = 1;
  // belt continuation out of this node (dir0 for junctions)
  int out_segment = -1;
  // set for junctions only
  int connecting_segment = -1;
};

struct Segment {
  int index = -1;
  std::string id;
  int from = -1;
  int to = -1;
  int steps = 1;
  bool connecting = false;
  int owner_junction = -1;  // junction whose dir1 this is
  int loop = -1;            // loop the segment lies on; for connecting, to-node's loop
};

struct JunctionLink {
  int node = -1;
  int dir0_segment = -1;
  int dir1_segment = -1;
};

// Immutable conveyor layout: loops of timed segments with decision points.
// Built once (preset or document), validated, routing tables precomputed;
// safe for shared read access afterwards.
class Topology {
 public:
  // Three-loop layout with the stock point counts and timings; fully
  // deterministic, no hidden randomness.
  static Topology default_preset();
  static Topology from_document(const ConfigDoc& doc);
  ConfigDoc to_document() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<JunctionLink>& junction_links() const { return links_; }
  int loop_count() const { return static_cast<int>(loop_ids_.size()); }
  const std::string& loop_id(int loop) const { return loop_ids_[loop]; }
  int connecting_section_capacity() const { return section_capacity_; }
  double resolution_s() const { return resolution_s_; }

  // node indices by kind, in document order (defines action indexing)
  const std::vector<int>& incoming_nodes() const { return incoming_; }
  const std::vector<int>& storage_nodes() const { return storage_; }
  const std::vector<int>& outgoing_nodes() const { return outgoing_; }
  const std::vector<int>& junction_nodes() const { return junctions_; }

  // position of a storage node in storage_nodes(), -1 if not storage
  int storage_order(int node) const { return storage_order_[node]; }
  int node_by_id(const std::string& id) const;  // throws if unknown

  int loop_membership(int node) const;
  std::vector<int> same_loop_storages(int incoming_node) const;

  // Segments on a loop in cycle order, starting at the lowest-index node.
  const std::vector<int>& loop_segments(int loop) const {
    return loop_cycles_[loop];
  }

  // Total pallet cells available on loop belts (init capacity bound).
  int64_t loop_cell_count() const;

  int64_t route_cost(int from, int to) const;  // steps, -1 if unreachable
  // Minimal-cost segment path; equal-cost ties resolved by the smallest
  // first-segment id. Empty route when from == to.
  std::vector<int> shortest_route(int from, int to) const;

  // loop a pallet on this segment counts toward
  int loop_of_segment(int segment) const { return segments_[segment].loop; }

 private:
  Topology() = default;
  void finalize();  // derive tables + validate, throws SchemaError
  int segment_by_id(const std::string& id) const;

  std::vector<Node> nodes_;
  std::vector<Segment> segments_;
  std::vector<JunctionLink> links_;
  std::vector<std::string> loop_ids_;
  int section_capacity_ = 10;
  double resolution_s_ = 0.1;

  std::vector<int> incoming_, storage_, outgoing_, junctions_;
  std::vector<int> storage_order_;
  std::vector<std::vector<int>> out_segments_;  // per node
  std::vector<std::vector<int>> loop_cycles_;
  std::vector<std::vector<int64_t>> dist_;
};

}  // namespace mhs
