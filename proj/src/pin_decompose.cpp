#include "attnroute/pin_decompose.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "attnroute/rng.hpp"

namespace attnroute {

int bar_distance(const Bar& a, const Bar& b) {
  const int gap_x = std::max(0, std::max(a.x1, b.x1) - std::min(a.x2, b.x2));
  return gap_x + std::abs(a.y - b.y);
}

std::vector<Bar> placed_bars(const Problem& p, const TrackAssignment& ta) {
  std::vector<Bar> out;
  for (const auto& it : p.instterms) {
    auto s = ta.slots.find(it.id);
    if (s == ta.slots.end()) continue;
    out.push_back(Bar{it.id, it.net, it.x1, it.x2, global_y(s->second.row, s->second.track)});
  }
  return out;
}

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

PairFeature feature_of(const Bar& a, const Bar& b, int net_index) {
  return {a.x1, a.x2, a.y, b.x1, b.x2, b.y, net_index};
}

}  // namespace

std::vector<InstTermPair> decompose_net(const Net& net, const std::vector<Bar>& bars, int net_index) {
  std::vector<const Bar*> members;
  for (int id : net.members)
    for (const auto& bar : bars)
      if (bar.id == id) members.push_back(&bar);
  std::sort(members.begin(), members.end(), [](const Bar* a, const Bar* b) { return a->id < b->id; });

  struct Edge {
    int w;
    int lo;
    int hi;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j)
      edges.push_back({bar_distance(*members[i], *members[j]), members[i]->id, members[j]->id, i, j});
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.w, a.lo, a.hi) < std::tie(b.w, b.lo, b.hi); });

  std::vector<InstTermPair> out;
  DisjointSet ds(members.size());
  for (const auto& e : edges) {
    if (!ds.unite(e.i, e.j)) continue;
    const Bar& a = *members[e.i];
    const Bar& b = *members[e.j];
    out.push_back(InstTermPair{a.id, b.id, net.net_id, feature_of(a, b, net_index)});
    if (out.size() + 1 == members.size()) break;
  }
  return out;
}

std::vector<InstTermPair> decompose_net(const Problem& p, const Net& net, const TrackAssignment& ta,
                                        int net_index) {
  return decompose_net(net, placed_bars(p, ta), net_index);
}

namespace {

void fill_padding(RoutingInstance& inst, std::uint64_t seed) {
  const auto real = static_cast<std::size_t>(inst.real_count());
  inst.features.resize(real);
  inst.mask.assign(real, true);
  for (std::size_t i = 0; i < real; ++i) inst.features[i] = inst.pairs[i].feature;

  PairFeature lo{}, hi{};
  if (real > 0) {
    lo = hi = inst.features[0];
    for (const auto& f : inst.features)
      for (std::size_t c = 0; c < f.size(); ++c) {
        lo[c] = std::min(lo[c], f[c]);
        hi[c] = std::max(hi[c], f[c]);
      }
  }
  Rng rng(seed);
  for (auto i = real; i < static_cast<std::size_t>(inst.n_max); ++i) {
    PairFeature f{};
    if (inst.pad == PadStrategy::PadRandom && real > 0)
      for (std::size_t c = 0; c < f.size(); ++c) f[c] = static_cast<int>(rng.uniform_int(lo[c], hi[c]));
    inst.features.push_back(f);
    inst.mask.push_back(false);
  }
}

}  // namespace

RoutingInstance decompose_problem(const Problem& p, const TrackAssignment& ta, int n_max, PadStrategy strategy,
                                  std::uint64_t seed) {
  RoutingInstance inst;
  inst.name = p.name;
  inst.width = p.wsp.width;
  inst.height = p.wsp.rows * kTracksPerRow;
  inst.bars = placed_bars(p, ta);
  inst.unassigned_count = static_cast<int>(ta.unassigned.size());
  inst.pad = strategy;

  const auto nets = p.nets.empty() ? derive_nets(p.instterms) : p.nets;
  inst.max_net_index = std::max(0, static_cast<int>(nets.size()) - 1);
  for (std::size_t k = 0; k < nets.size(); ++k) {
    auto pairs = decompose_net(nets[k], inst.bars, static_cast<int>(k));
    inst.pairs.insert(inst.pairs.end(), pairs.begin(), pairs.end());
  }
  if (n_max == 0) n_max = inst.real_count();
  if (n_max < inst.real_count())
    throw std::invalid_argument("n_max " + std::to_string(n_max) + " is too small: problem '" + p.name + "' needs " +
                                std::to_string(inst.real_count()) + " pair slots");
  inst.n_max = n_max;
  fill_padding(inst, seed);
  return inst;
}

RoutingInstance build_instance(const Problem& p, int n_max, PadStrategy strategy, std::uint64_t seed) {
  return decompose_problem(p, assign_tracks(p), n_max, strategy, seed);
}

RoutingInstance repad(const RoutingInstance& inst, int n_max, PadStrategy strategy, std::uint64_t seed) {
  if (n_max < inst.real_count())
    throw std::invalid_argument("n_max " + std::to_string(n_max) + " is too small: instance '" + inst.name +
                                "' needs " + std::to_string(inst.real_count()) + " pair slots");
  RoutingInstance out = inst;
  out.n_max = n_max;
  out.pad = strategy;
  fill_padding(out, seed);
  return out;
}

}  // namespace attnroute
