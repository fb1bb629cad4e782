#include <doctest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "mhs/heuristics.hpp"

using namespace mhs;
using namespace mhs::test;

namespace {

// hand-built context over the default preset
struct CtxFixture {
  Topology topo = Topology::default_preset();
  SimEngine eng{topo, DemandModel::zero(topo), SimConfig{500, 36000, 0.01}};
  SimState st = eng.init(7);
  Rng rng{1234};

  DispatchContext ctx(const std::string& node_id) {
    return build_dispatch_context(topo, st, topo.node_by_id(node_id), &rng);
  }
};

}  // namespace

TEST_CASE("low: containment, singleton behavior, uniformity") {
  // a loop hosting exactly one storage point: low must return it
  {
    ConfigDoc doc;
    doc.add_row("loops", {"L"});
    doc.add_row("nodes", {"i", "incoming", "L", "2", "0.5"});
    doc.add_row("nodes", {"s", "storage", "L", "2", "1.0"});
    doc.add_row("segments", {"is", "i", "s", "10"});
    doc.add_row("segments", {"si", "s", "i", "10"});
    Topology t1 = Topology::from_document(doc);
    SimEngine eng(t1, DemandModel::zero(t1), SimConfig{2, 100, 0.01});
    SimState st = eng.init(1);
    Rng rng(2);
    auto ctx1 = build_dispatch_context(t1, st, t1.node_by_id("i"), &rng);
    for (int i = 0; i < 50; ++i) CHECK(heuristic_low(ctx1) == 0);
  }

  CtxFixture f;
  auto ctx = f.ctx("in0");

  // loop0 hosts exactly storages s00..s06 (orders 0..6)
  for (int i = 0; i < 10000; ++i) {
    int a = heuristic_low(ctx);
    CHECK(a >= 0);
    CHECK(a <= 6);
  }

  // frequencies within 3 sigma of uniform over 7 options
  std::map<int, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) counts[heuristic_low(ctx)]++;
  double expect = draws / 7.0;
  double sigma = std::sqrt(draws * (1.0 / 7) * (6.0 / 7));
  for (auto& [a, c] : counts) CHECK(std::abs(c - expect) < 3 * sigma);
}

TEST_CASE("min_cost: hand example, tie-break, pairwise brute force") {
  // direct evaluation: (5-2)/(10-2) + 0.3 = 0.675
  CHECK(min_cost_value(5, 2, 10, 0.3) == doctest::Approx(0.675));
  // degenerate spread defines the load term as zero
  CHECK(min_cost_value(4, 4, 4, 0.1) == doctest::Approx(0.1));

  CtxFixture f;
  auto ctx = f.ctx("in0");
  HeuristicParams p = HeuristicParams::defaults(f.topo);

  SUBCASE("identical totals and equal constants pick the smallest loop id") {
    HeuristicParams eq = p;
    for (auto& row : eq.loop_cost)
      for (auto& c : row) c = 0.2;
    ctx.loop_assigned = {3, 3, 3};
    CHECK(min_cost_loop(ctx, {0, 1, 2}, eq) == 0);
    CHECK(min_cost_loop(ctx, {2, 1}, eq) == 1);
  }

  SUBCASE("two-loop argmin matches brute force over random tuples") {
    Rng rng(55);
    for (int trial = 0; trial < 1000; ++trial) {
      ctx.loop_assigned = {static_cast<int32_t>(rng.next_below(40)),
                           static_cast<int32_t>(rng.next_below(40)),
                           static_cast<int32_t>(rng.next_below(40))};
      int got = min_cost_loop(ctx, {0, 1, 2}, p);
      double x_min = *std::min_element(ctx.loop_assigned.begin(),
                                       ctx.loop_assigned.end());
      double x_max = *std::max_element(ctx.loop_assigned.begin(),
                                       ctx.loop_assigned.end());
      int best = -1;
      double best_c = 1e300;
      for (int loop = 0; loop < 3; ++loop) {
        double c = (x_max > x_min
                        ? (ctx.loop_assigned[loop] - x_min) / (x_max - x_min)
                        : 0.0) +
                   p.loop_cost[ctx.node_loop][loop];
        if (c < best_c) {
          best_c = c;
          best = loop;
        }
      }
      CHECK(got == best);
    }
  }

  SUBCASE("argmin is invariant to a common shift of every loop constant") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
      ctx.loop_assigned = {static_cast<int32_t>(rng.next_below(30)),
                           static_cast<int32_t>(rng.next_below(30)),
                           static_cast<int32_t>(rng.next_below(30))};
      HeuristicParams shifted = p;
      double delta = rng.uniform(0, 5);
      for (auto& row : shifted.loop_cost)
        for (auto& c : row) c += delta;
      CHECK(min_cost_loop(ctx, {0, 1, 2}, p) ==
            min_cost_loop(ctx, {0, 1, 2}, shifted));
    }
  }
}

TEST_CASE("medium: filter, one-loop argmin, saturation fallback") {
  CtxFixture f;
  HeuristicParams p = HeuristicParams::defaults(f.topo);

  SUBCASE("single-loop hand trace: In=[1,5,0], C1=3 selects the In=0 storage") {
    Topology t = test::single_loop();  // storages sA (order 0), sB (order 1)
    // add a third storage via a custom one-loop layout
    ConfigDoc doc;
    doc.add_row("loops", {"L"});
    doc.add_row("nodes", {"i", "incoming", "L", "2", "0.5"});
    doc.add_row("nodes", {"p", "storage", "L", "2", "1.0"});
    doc.add_row("nodes", {"q", "storage", "L", "2", "1.0"});
    doc.add_row("nodes", {"r", "storage", "L", "2", "1.0"});
    doc.add_row("segments", {"ip", "i", "p", "10"});
    doc.add_row("segments", {"pq", "p", "q", "10"});
    doc.add_row("segments", {"qr", "q", "r", "10"});
    doc.add_row("segments", {"ri", "r", "i", "10"});
    Topology t3 = Topology::from_document(doc);
    SimEngine eng(t3, DemandModel::zero(t3), SimConfig{2, 100, 0.01});
    SimState st = eng.init(1);
    Rng rng(3);
    DispatchContext ctx =
        build_dispatch_context(t3, st, t3.node_by_id("i"), &rng);
    ctx.in_counts = {1, 5, 0};
    ctx.loop_assigned = {6};
    HeuristicParams p3 = HeuristicParams::defaults(t3);
    p3.c1_medium = 3;
    CHECK(heuristic_medium(ctx, p3) == 2);  // candidates {p, r}, argmin In -> r

    // exactly one survivor is returned regardless of its In value
    ctx.in_counts = {9, 5, 2};
    p3.c1_medium = 2;
    CHECK(heuristic_medium(ctx, p3) == 2);

    // every storage above C1: fallback re-opens the full set
    ctx.in_counts = {9, 5, 7};
    p3.c1_medium = 2;
    CHECK(heuristic_medium(ctx, p3) == 1);  // argmin In over all
  }

  SUBCASE("default preset: result is always a valid storage action") {
    CtxFixture g;
    auto ctx = g.ctx("in2");
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
      for (auto& c : ctx.in_counts)
        c = static_cast<int32_t>(rng.next_below(10));
      ctx.loop_assigned.assign(3, 0);
      for (size_t k = 0; k < ctx.in_counts.size(); ++k)
        ctx.loop_assigned[g.topo.nodes()[g.topo.storage_nodes()[k]].loop] +=
            ctx.in_counts[k];
      int a = heuristic_medium(ctx, p);
      CHECK(a >= 0);
      CHECK(a < 20);
    }
  }
}

TEST_CASE("high: four-way branch table, argmin out-in, oracle sweep") {
  CtxFixture f;
  auto ctx = f.ctx("in0");  // loop0
  HeuristicParams p = HeuristicParams::defaults(f.topo);
  p.c1_high = 10;
  p.c2_high = 10;
  p.c3_high = 100;  // disable the In filter for branch inspection

  auto run_selected = [&](double x_same_total, double x_other_total) {
    // distribute assigned counts so loop0 carries x_same, loop1 the rest
    for (auto& c : ctx.in_counts) c = 0;
    ctx.in_counts[0] = static_cast<int32_t>(x_same_total);
    ctx.in_counts[7] = static_cast<int32_t>(x_other_total);  // s07 on loop1
    ctx.loop_assigned = {static_cast<int32_t>(x_same_total),
                         static_cast<int32_t>(x_other_total), 0};
    return heuristic_high(ctx, p);
  };

  SUBCASE("same below, other above: selection restricted to the same loop") {
    // out-in differences equal everywhere, so the own-loop preference and
    // branch choice determine the loop of the result
    int a = run_selected(5, 20);
    CHECK(f.topo.nodes()[f.topo.storage_nodes()[a]].loop == 0);
  }
  SUBCASE("same above, other below selects the other loops") {
    int a = run_selected(20, 5);
    CHECK(f.topo.nodes()[f.topo.storage_nodes()[a]].loop != 0);
  }

  SUBCASE("argmin of out-in picks the most negative difference") {
    for (auto& c : ctx.in_counts) c = 0;
    for (auto& c : ctx.out_counts) c = 0;
    ctx.loop_assigned = {0, 0, 0};
    // survivors on loop0 after own-loop preference; rig out-in = 2, -1, 0
    ctx.out_counts[0] = 2;
    ctx.out_counts[1] = 0;
    ctx.in_counts[1] = 1;
    ctx.out_counts[2] = 0;
    // remaining same-loop storages positive so they lose the argmin
    for (int k = 3; k <= 6; ++k) ctx.out_counts[k] = 5;
    int a = heuristic_high(ctx, p);
    CHECK(a == 1);
  }

  SUBCASE("branch selection matches a truth-table oracle on random tuples") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
      double xs = rng.next_below(30);
      double xo = rng.next_below(30);
      double c1 = rng.next_below(20);
      double c2 = rng.next_below(20);
      HeuristicParams q = p;
      q.c1_high = c1;
      q.c2_high = c2;
      q.c3_high = 1000;

      for (auto& c : ctx.in_counts) c = 0;
      for (auto& c : ctx.out_counts) c = 0;
      // spread x_same over loop0 storages, x_other over loop1 storages
      ctx.in_counts[0] = static_cast<int32_t>(xs);
      ctx.in_counts[7] = static_cast<int32_t>(xo);
      ctx.loop_assigned = {static_cast<int32_t>(xs), static_cast<int32_t>(xo),
                           0};
      int a = heuristic_high(ctx, q);
      int loop_of_a = f.topo.nodes()[f.topo.storage_nodes()[a]].loop;

      // oracle: the if-ladder, then own-loop preference when nonempty
      int expected_loop;
      if (xs < c1 && xo > c2)
        expected_loop = 0;  // same only
      else if (xs > c1 && xo < c2)
        expected_loop = -1;  // other loops only
      else
        expected_loop = -2;  // all, then own-loop preference keeps loop0
      if (expected_loop == 0) CHECK(loop_of_a == 0);
      if (expected_loop == -1) CHECK(loop_of_a != 0);
      if (expected_loop == -2) CHECK(loop_of_a == 0);
    }
  }
}

TEST_CASE("junction least-pallets and random baseline") {
  CtxFixture f;
  auto ctx = f.ctx("j0");  // junction on loop0, crossing lands on loop1

  ctx.loop_physical = {120, 80, 100};
  CHECK(junction_least_pallets(ctx) == 1);  // fewer pallets across
  ctx.loop_physical = {80, 120, 100};
  CHECK(junction_least_pallets(ctx) == 0);
  ctx.loop_physical = {100, 100, 100};
  CHECK(junction_least_pallets(ctx) == 0);  // tie rule

  auto bad = f.ctx("in0");
  CHECK_THROWS_AS(junction_least_pallets(bad), RuntimeFailure);

  SUBCASE("random baseline is uniform over all twenty storages (chi-square)") {
    auto rctx = f.ctx("in1");
    const int draws = 10000;
    std::vector<int> counts(20, 0);
    for (int i = 0; i < draws; ++i) {
      int a = random_baseline(rctx);
      REQUIRE(a >= 0);
      REQUIRE(a < 20);
      counts[a]++;
    }
    double expect = draws / 20.0;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // df = 19, upper 1% critical value
    CHECK(chi2 < 36.19);
  }
}

TEST_CASE("heuristics are pure: same context and rng state, same output") {
  CtxFixture f;
  HeuristicParams p = HeuristicParams::defaults(f.topo);
  for (const char* node : {"in0", "in2", "in3"}) {
    Rng r1(42), r2(42);
    auto c1 = f.ctx(node);
    auto c2 = f.ctx(node);
    c1.rng = &r1;
    c2.rng = &r2;
    CHECK(heuristic_low(c1) == heuristic_low(c2));
    CHECK(heuristic_medium(c1, p) == heuristic_medium(c2, p));
    CHECK(heuristic_high(c1, p) == heuristic_high(c2, p));
    CHECK(random_baseline(c1) == random_baseline(c2));
  }
}

TEST_CASE("frozen policy heuristic equals direct argmax calls") {
  Mlp actor = Mlp::init({45, 16, 20}, 5);
  AgentHeuristic h = frozen_policy_heuristic(actor, 20, 45);
  CtxFixture f;
  auto ctx = f.ctx("in0");
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Observation obs(45);
    for (auto& v : obs) v = rng.next_double();
    CHECK(h(ctx, obs) == argmax(forward(actor, obs)));
  }

  // action-dim mismatch is rejected up front
  CHECK_THROWS_AS(frozen_policy_heuristic(Mlp::init({45, 8, 7}, 1), 20, 45),
                  RuntimeFailure);
  CHECK_THROWS_AS(frozen_policy_heuristic(Mlp::init({10, 8, 20}, 1), 20, 45),
                  RuntimeFailure);
}
