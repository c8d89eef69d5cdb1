#pragma once

#include <compare>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "attnroute/pin_decompose.hpp"

namespace attnroute {

inline constexpr int kWirelengthWeight = 1;
inline constexpr int kOpenWeight = 10;

struct Vertex {
  int x = 0;
  int y = 0;
  auto operator<=>(const Vertex&) const = default;
};

// Unit-capacity routing grid. An edge is free (capacity 1) or owned by a net
// (capacity 0); the owning net may reuse it.
class CapacityGrid {
 public:
  static constexpr int kFree = -1;

  CapacityGrid(int width, int height);
  // Grid with every bar's horizontal edges owned by the bar's net.
  static CapacityGrid with_bars(int width, int height, std::span<const Bar> bars);

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(Vertex v) const { return v.x >= 0 && v.x <= width_ && v.y >= 0 && v.y < height_; }

  // Owner of the unit edge between adjacent vertices a and b.
  int owner(Vertex a, Vertex b) const;
  int capacity(Vertex a, Vertex b) const { return owner(a, b) == kFree ? 1 : 0; }
  bool usable(Vertex a, Vertex b, int net) const;
  // Axis-aligned segment from a to b, every unit edge usable by `net`.
  bool segment_usable(Vertex a, Vertex b, int net) const;
  void claim(Vertex a, Vertex b, int net);

  int horizontal_edge_count() const { return width_ * height_; }
  int vertical_edge_count() const { return (width_ + 1) * (height_ - 1); }
  const std::vector<int>& horizontal_owners() const { return h_owner_; }
  const std::vector<int>& vertical_owners() const { return v_owner_; }

 private:
  int& slot(Vertex a, Vertex b);
  int slot_index(Vertex a, Vertex b, bool& horizontal) const;

  int width_;
  int height_;
  std::vector<int> h_owner_;  // ((x,y),(x+1,y)) at y*width + x
  std::vector<int> v_owner_;  // ((x,y),(x,y+1)) at y*(width+1) + x
};

struct Path {
  std::vector<Vertex> vertices;  // unit steps, first is the start

  int wirelength() const { return vertices.empty() ? 0 : static_cast<int>(vertices.size()) - 1; }
  int bends() const;
  // Start, bend points and end.
  std::vector<Vertex> corners() const;
  bool operator==(const Path&) const = default;
};

// Unit-step path through the given corner points.
Path path_through(std::initializer_list<Vertex> corners);
bool path_usable(const CapacityGrid& g, const Path& p, int net);

std::optional<Path> try_l(const CapacityGrid& g, Vertex vi, Vertex vj, int net);
std::optional<Path> try_z(const CapacityGrid& g, Vertex vi, Vertex vj, int net);

// Drops the leading edges that run along bar a and the trailing edges along bar b.
Path trim_path(const Path& path, const Bar& a, const Bar& b);

struct RouteResult {
  bool open = true;
  Path path;  // trimmed; empty when open
  int net = 0;
  int wirelength() const { return open ? 0 : path.wirelength(); }
};

// Routes one pair on g and commits the chosen path. Nothing is committed on failure.
RouteResult route_pair(CapacityGrid& g, const Bar& a, const Bar& b, int net);
RouteResult route_pair(CapacityGrid& g, const InstTermPair& pair);

Bar bar_a(const InstTermPair& pair);
Bar bar_b(const InstTermPair& pair);

struct RouteSolution {
  std::vector<int> order;
  std::vector<RouteResult> results;  // indexed by pair index
  int total_wirelength = 0;
  int open_count = 0;  // failed pairs plus unassignable instTerms
  int cost = 0;
};

class InvalidOrder : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline int route_cost_of(int wirelength, int opens) { return kWirelengthWeight * wirelength + kOpenWeight * opens; }

void check_order(const RoutingInstance& inst, std::span<const int> order);

CapacityGrid initial_grid(const RoutingInstance& inst);
RouteSolution route_sequence(const RoutingInstance& inst, std::span<const int> order);
// Same as route_sequence(...).cost without keeping paths.
int route_cost(const RoutingInstance& inst, std::span<const int> order);

}  // namespace attnroute
