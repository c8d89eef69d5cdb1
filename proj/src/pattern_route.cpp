#include "attnroute/pattern_route.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <tuple>

namespace attnroute {

CapacityGrid::CapacityGrid(int width, int height)
    : width_(std::max(0, width)),
      height_(std::max(1, height)),
      h_owner_(static_cast<std::size_t>(width_ * height_), kFree),
      v_owner_(static_cast<std::size_t>((width_ + 1) * (height_ - 1)), kFree) {}

CapacityGrid CapacityGrid::with_bars(int width, int height, std::span<const Bar> bars) {
  CapacityGrid g(width, height);
  for (const auto& bar : bars)
    for (int x = bar.x1; x < bar.x2; ++x) g.claim({x, bar.y}, {x + 1, bar.y}, bar.net);
  return g;
}

int CapacityGrid::slot_index(Vertex a, Vertex b, bool& horizontal) const {
  if (a.y == b.y && std::abs(a.x - b.x) == 1) {
    horizontal = true;
    return a.y * width_ + std::min(a.x, b.x);
  }
  if (a.x == b.x && std::abs(a.y - b.y) == 1) {
    horizontal = false;
    return std::min(a.y, b.y) * (width_ + 1) + a.x;
  }
  throw std::invalid_argument("vertices are not grid-adjacent");
}

int& CapacityGrid::slot(Vertex a, Vertex b) {
  bool horizontal = false;
  const int i = slot_index(a, b, horizontal);
  return horizontal ? h_owner_[static_cast<std::size_t>(i)] : v_owner_[static_cast<std::size_t>(i)];
}

int CapacityGrid::owner(Vertex a, Vertex b) const {
  bool horizontal = false;
  const int i = slot_index(a, b, horizontal);
  return horizontal ? h_owner_[static_cast<std::size_t>(i)] : v_owner_[static_cast<std::size_t>(i)];
}

bool CapacityGrid::usable(Vertex a, Vertex b, int net) const {
  if (!contains(a) || !contains(b)) return false;
  const int o = owner(a, b);
  return o == kFree || o == net;
}

bool CapacityGrid::segment_usable(Vertex a, Vertex b, int net) const {
  if (!contains(a) || !contains(b)) return false;
  if (a.y == b.y) {
    const int lo = std::min(a.x, b.x);
    const int hi = std::max(a.x, b.x);
    const int* row = h_owner_.data() + static_cast<std::ptrdiff_t>(a.y) * width_;
    for (int x = lo; x < hi; ++x)
      if (row[x] != kFree && row[x] != net) return false;
    return true;
  }
  if (a.x == b.x) {
    const int lo = std::min(a.y, b.y);
    const int hi = std::max(a.y, b.y);
    for (int y = lo; y < hi; ++y) {
      const int o = v_owner_[static_cast<std::size_t>(y * (width_ + 1) + a.x)];
      if (o != kFree && o != net) return false;
    }
    return true;
  }
  throw std::invalid_argument("segment is not axis-aligned");
}

void CapacityGrid::claim(Vertex a, Vertex b, int net) { slot(a, b) = net; }

int Path::bends() const {
  int n = 0;
  for (std::size_t i = 2; i < vertices.size(); ++i) {
    const bool h1 = vertices[i - 1].y == vertices[i - 2].y;
    const bool h2 = vertices[i].y == vertices[i - 1].y;
    if (h1 != h2) ++n;
  }
  return n;
}

std::vector<Vertex> Path::corners() const {
  std::vector<Vertex> out;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (i == 0 || i + 1 == vertices.size()) {
      out.push_back(vertices[i]);
      continue;
    }
    const bool h1 = vertices[i].y == vertices[i - 1].y;
    const bool h2 = vertices[i + 1].y == vertices[i].y;
    if (h1 != h2) out.push_back(vertices[i]);
  }
  return out;
}

Path path_through(std::initializer_list<Vertex> corners) {
  Path p;
  for (const Vertex c : corners) {
    if (p.vertices.empty()) {
      p.vertices.push_back(c);
      continue;
    }
    Vertex cur = p.vertices.back();
    while (cur.x != c.x) {
      cur.x += c.x > cur.x ? 1 : -1;
      p.vertices.push_back(cur);
    }
    while (cur.y != c.y) {
      cur.y += c.y > cur.y ? 1 : -1;
      p.vertices.push_back(cur);
    }
  }
  return p;
}

bool path_usable(const CapacityGrid& g, const Path& p, int net) {
  for (std::size_t i = 1; i < p.vertices.size(); ++i)
    if (!g.usable(p.vertices[i - 1], p.vertices[i], net)) return false;
  return true;
}

std::optional<Path> try_l(const CapacityGrid& g, Vertex vi, Vertex vj, int net) {
  if (!g.contains(vi) || !g.contains(vj)) return std::nullopt;
  if (vi.x == vj.x || vi.y == vj.y) {
    if (g.segment_usable(vi, vj, net)) return path_through({vi, vj});
    return std::nullopt;
  }
  // Upper L bends on the higher track, lower L on the lower one.
  const Vertex first{vi.x, vj.y};
  const Vertex second{vj.x, vi.y};
  const bool first_is_upper = vj.y > vi.y;
  const Vertex upper = first_is_upper ? first : second;
  const Vertex lower = first_is_upper ? second : first;
  for (const Vertex corner : {upper, lower})
    if (g.segment_usable(vi, corner, net) && g.segment_usable(corner, vj, net)) return path_through({vi, corner, vj});
  return std::nullopt;
}

namespace {

// Interior coordinates strictly between a and b, nearest the midpoint first,
// ties toward the smaller coordinate.
std::vector<int> interior_midpoint_out(int a, int b) {
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  std::vector<int> out;
  for (int m = lo + 1; m < hi; ++m) out.push_back(m);
  std::stable_sort(out.begin(), out.end(), [&](int p, int q) {
    const int dp = std::abs(2 * p - (a + b));
    const int dq = std::abs(2 * q - (a + b));
    return std::tie(dp, p) < std::tie(dq, q);
  });
  return out;
}

}  // namespace

std::optional<Path> try_z(const CapacityGrid& g, Vertex vi, Vertex vj, int net) {
  if (!g.contains(vi) || !g.contains(vj)) return std::nullopt;
  const int dx = std::abs(vi.x - vj.x);
  const int dy = std::abs(vi.y - vj.y);
  if (dx < 2 && dy < 2) return std::nullopt;
  // HVH over bend columns; degenerate when both ends share a track.
  if (dy > 0) {
    for (int xm : interior_midpoint_out(vi.x, vj.x)) {
      const Vertex c1{xm, vi.y};
      const Vertex c2{xm, vj.y};
      if (g.segment_usable(vi, c1, net) && g.segment_usable(c1, c2, net) && g.segment_usable(c2, vj, net))
        return path_through({vi, c1, c2, vj});
    }
  }
  // VHV over bend tracks.
  if (dx > 0) {
    for (int ym : interior_midpoint_out(vi.y, vj.y)) {
      const Vertex c1{vi.x, ym};
      const Vertex c2{vj.x, ym};
      if (g.segment_usable(vi, c1, net) && g.segment_usable(c1, c2, net) && g.segment_usable(c2, vj, net))
        return path_through({vi, c1, c2, vj});
    }
  }
  return std::nullopt;
}

namespace {

bool along_bar(Vertex u, Vertex v, const Bar& bar) {
  return u.y == bar.y && v.y == bar.y && std::min(u.x, v.x) >= bar.x1 && std::max(u.x, v.x) <= bar.x2;
}

}  // namespace

Path trim_path(const Path& path, const Bar& a, const Bar& b) {
  if (path.vertices.size() < 2) return path;
  std::size_t first = 0;
  std::size_t last = path.vertices.size() - 1;
  while (first < last && along_bar(path.vertices[first], path.vertices[first + 1], a)) ++first;
  while (last > first && along_bar(path.vertices[last - 1], path.vertices[last], b)) --last;
  Path out;
  out.vertices.assign(path.vertices.begin() + static_cast<std::ptrdiff_t>(first),
                      path.vertices.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return out;
}

RouteResult route_pair(CapacityGrid& g, const Bar& a, const Bar& b, int net) {
  struct Endpoints {
    int dist;
    Vertex vi;
    Vertex vj;
  };
  std::vector<Endpoints> combos;
  combos.reserve(static_cast<std::size_t>((a.x2 - a.x1 + 1) * (b.x2 - b.x1 + 1)));
  for (int xa = a.x1; xa <= a.x2; ++xa)
    for (int xb = b.x1; xb <= b.x2; ++xb)
      combos.push_back({std::abs(xa - xb) + std::abs(a.y - b.y), {xa, a.y}, {xb, b.y}});
  std::sort(combos.begin(), combos.end(), [](const Endpoints& p, const Endpoints& q) {
    return std::tie(p.dist, p.vi, p.vj) < std::tie(q.dist, q.vi, q.vj);
  });

  // L and Z never detour, so a candidate's wirelength is its endpoint distance
  // and the scan can stop once distances exceed the best found.
  std::optional<Path> best;
  int best_dist = 0;
  int best_bends = 0;
  for (const auto& c : combos) {
    if (best && c.dist > best_dist) break;
    auto path = try_l(g, c.vi, c.vj, net);
    if (!path) path = try_z(g, c.vi, c.vj, net);
    if (!path) continue;
    const int bends = path->bends();
    if (!best || bends < best_bends) {
      best = std::move(path);
      best_dist = c.dist;
      best_bends = bends;
    }
  }

  RouteResult r;
  r.net = net;
  if (!best) return r;
  r.open = false;
  r.path = trim_path(*best, a, b);
  for (std::size_t i = 1; i < r.path.vertices.size(); ++i) g.claim(r.path.vertices[i - 1], r.path.vertices[i], net);
  return r;
}

Bar bar_a(const InstTermPair& pair) {
  return Bar{pair.a, pair.net_id, pair.feature[0], pair.feature[1], pair.feature[2]};
}

Bar bar_b(const InstTermPair& pair) {
  return Bar{pair.b, pair.net_id, pair.feature[3], pair.feature[4], pair.feature[5]};
}

RouteResult route_pair(CapacityGrid& g, const InstTermPair& pair) {
  return route_pair(g, bar_a(pair), bar_b(pair), pair.net_id);
}

void check_order(const RoutingInstance& inst, std::span<const int> order) {
  const int n = inst.real_count();
  if (static_cast<int>(order.size()) != n)
    throw InvalidOrder("order has " + std::to_string(order.size()) + " entries, expected " + std::to_string(n));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int k : order) {
    if (k < 0 || k >= n) throw InvalidOrder("order index " + std::to_string(k) + " out of range");
    if (seen[static_cast<std::size_t>(k)]) throw InvalidOrder("order index " + std::to_string(k) + " repeated");
    seen[static_cast<std::size_t>(k)] = 1;
  }
}

CapacityGrid initial_grid(const RoutingInstance& inst) {
  return CapacityGrid::with_bars(inst.width, inst.height, inst.bars);
}

RouteSolution route_sequence(const RoutingInstance& inst, std::span<const int> order) {
  check_order(inst, order);
  CapacityGrid g = initial_grid(inst);
  RouteSolution sol;
  sol.order.assign(order.begin(), order.end());
  sol.results.resize(inst.pairs.size());
  sol.open_count = inst.unassigned_count;
  for (int k : order) {
    auto& r = sol.results[static_cast<std::size_t>(k)];
    r = route_pair(g, inst.pairs[static_cast<std::size_t>(k)]);
    if (r.open)
      ++sol.open_count;
    else
      sol.total_wirelength += r.path.wirelength();
  }
  sol.cost = route_cost_of(sol.total_wirelength, sol.open_count);
  return sol;
}

int route_cost(const RoutingInstance& inst, std::span<const int> order) {
  check_order(inst, order);
  CapacityGrid g = initial_grid(inst);
  int wl = 0;
  int opens = inst.unassigned_count;
  for (int k : order) {
    const auto r = route_pair(g, inst.pairs[static_cast<std::size_t>(k)]);
    if (r.open)
      ++opens;
    else
      wl += r.path.wirelength();
  }
  return route_cost_of(wl, opens);
}

}  // namespace attnroute
