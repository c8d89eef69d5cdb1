#include <algorithm>
#include <numeric>

#include "attnroute/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attnroute;
using oracle::term;

namespace {

Bar bar(int id, int x1, int x2, int y, int net = 0) { return Bar{id, net, x1, x2, y}; }

Net net_of(const std::vector<Bar>& bars) {
  Net n;
  for (const auto& b : bars) n.members.push_back(b.id);
  return n;
}

std::vector<Bar> random_bars(Rng& rng, int n) {
  std::vector<Bar> bars;
  for (int i = 0; i < n; ++i) {
    const int x1 = static_cast<int>(rng.uniform_int(0, 20));
    bars.push_back(bar(i, x1, x1 + static_cast<int>(rng.uniform_int(1, 5)), static_cast<int>(rng.uniform_int(0, 13))));
  }
  return bars;
}

// Spanning-tree check by union-find over the member ids.
bool spans(const std::vector<InstTermPair>& pairs, const std::vector<Bar>& bars) {
  std::map<int, int> parent;
  for (const auto& b : bars) parent[b.id] = b.id;
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  for (const auto& p : pairs) {
    const int ra = find(p.a), rb = find(p.b);
    if (ra == rb) return false;
    parent[ra] = rb;
  }
  return pairs.size() + 1 == bars.size();
}

}  // namespace

TEST_CASE("bar_distance: x gap plus track difference") {
  CHECK(bar_distance(bar(0, 0, 2, 0), bar(1, 4, 6, 3)) == 5);
  CHECK(bar_distance(bar(0, 0, 4, 0), bar(1, 2, 6, 3)) == 3);
  CHECK(bar_distance(bar(0, 0, 4, 0), bar(0, 0, 4, 0)) == 0);
}

TEST_CASE("bar_distance is symmetric and non-negative") {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const auto b = random_bars(rng, 3);
    CHECK(bar_distance(b[0], b[1]) >= 0);
    CHECK(bar_distance(b[0], b[1]) == bar_distance(b[1], b[0]));
    CHECK(bar_distance(b[0], b[0]) == 0);
  }
}

TEST_CASE("bar_distance is not a metric: a long bar bridges two distant ones") {
  const Bar a = bar(0, 0, 1, 0), b = bar(1, 0, 10, 0), c = bar(2, 9, 10, 0);
  CHECK(bar_distance(a, b) + bar_distance(b, c) == 0);
  CHECK(bar_distance(a, c) == 8);
}

TEST_CASE("decompose_net on small nets") {
  const std::vector<Bar> two{bar(3, 0, 2, 0), bar(8, 5, 6, 4)};
  const auto p2 = decompose_net(net_of(two), two);
  REQUIRE(p2.size() == 1);
  CHECK(p2[0].a == 3);
  CHECK(p2[0].b == 8);

  const std::vector<Bar> column{bar(0, 2, 5, 0), bar(1, 2, 5, 1), bar(2, 2, 5, 2)};
  const auto p3 = decompose_net(net_of(column), column);
  REQUIRE(p3.size() == 2);
  CHECK(p3[0].a == 0);
  CHECK(p3[0].b == 1);
  CHECK(p3[1].a == 1);
  CHECK(p3[1].b == 2);

  const std::vector<Bar> one{bar(0, 0, 1, 0)};
  CHECK(decompose_net(net_of(one), one).empty());
}

TEST_CASE("decompose_net weight equals the minimum over all labelled spanning trees") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const auto bars = random_bars(rng, static_cast<int>(rng.uniform_int(2, 6)));
    const auto pairs = decompose_net(net_of(bars), bars, 4);
    CHECK(spans(pairs, bars));
    int weight = 0;
    for (const auto& p : pairs) {
      weight += bar_distance(bars[static_cast<std::size_t>(p.a)], bars[static_cast<std::size_t>(p.b)]);
      CHECK(p.feature[6] == 4);
    }
    CHECK(weight == oracle::brute_mst_weight(bars));
  }
}

TEST_CASE("decompose_problem concatenates net trees and pads") {
  const Problem p = oracle::make_problem(2, 20, {term(0, 0, TermKind::SD, 0, 2), term(1, 0, TermKind::SD, 6, 8),
                                                 term(2, 0, TermKind::SD, 10, 12, 1), term(3, 1, TermKind::G, 3, 4),
                                                 term(4, 1, TermKind::G, 14, 16, 1)});
  const TrackAssignment ta = assign_tracks(p);
  REQUIRE(ta.unassigned.empty());

  const RoutingInstance exact = decompose_problem(p, ta);
  CHECK(exact.real_count() == 3);
  CHECK(exact.n_max == 3);
  CHECK(exact.pairs[0].net_id == 0);
  CHECK(exact.pairs[2].net_id == 1);
  for (const auto& pair : exact.pairs) {
    const InstTerm* a = p.find(pair.a);
    CHECK(pair.feature[0] == a->x1);
    CHECK(pair.feature[1] == a->x2);
    CHECK(pair.feature[2] == global_y(a->row, ta.slots.at(a->id).track));
  }

  const RoutingInstance padded = decompose_problem(p, ta, 10, PadStrategy::PadEmpty);
  REQUIRE(padded.features.size() == 10);
  CHECK(padded.mask == std::vector<bool>{true, true, true, false, false, false, false, false, false, false});
  for (int i = 3; i < 10; ++i) CHECK(padded.features[static_cast<std::size_t>(i)] == PairFeature{});

  const RoutingInstance r1 = decompose_problem(p, ta, 10, PadStrategy::PadRandom, 5);
  const RoutingInstance r2 = decompose_problem(p, ta, 10, PadStrategy::PadRandom, 5);
  CHECK(r1.features == r2.features);
  for (int i = 3; i < 10; ++i)
    for (int k = 0; k < 7; ++k) {
      int lo = INT32_MAX, hi = INT32_MIN;
      for (const auto& pair : exact.pairs) {
        lo = std::min(lo, pair.feature[static_cast<std::size_t>(k)]);
        hi = std::max(hi, pair.feature[static_cast<std::size_t>(k)]);
      }
      const int v = r1.features[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      CHECK(v >= lo);
      CHECK(v <= hi);
    }

  try {
    decompose_problem(p, ta, 2);
    FAIL("expected an n_max error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
}

TEST_CASE("repad changes only the padding") {
  GenConfig cfg;
  cfg.seed = 4;
  const RoutingInstance inst = build_instance(generate_problem(cfg));
  const RoutingInstance wide = repad(inst, inst.real_count() + 5, PadStrategy::PadEmpty, 0);
  CHECK(wide.pairs == inst.pairs);
  CHECK(wide.features.size() == static_cast<std::size_t>(inst.real_count() + 5));
  CHECK(std::count(wide.mask.begin(), wide.mask.end(), true) == inst.real_count());
}
