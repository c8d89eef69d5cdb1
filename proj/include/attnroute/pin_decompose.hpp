#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "attnroute/problem.hpp"
#include "attnroute/track_assign.hpp"

namespace attnroute {

// An instTerm placed on the flattened track grid.
struct Bar {
  int id = 0;
  int net = 0;
  int x1 = 0;
  int x2 = 0;
  int y = 0;
  bool operator==(const Bar&) const = default;
};

// Global track coordinate: rows stacked, tracks 1..7 mapped to 0..6.
inline int global_y(int row, int track) { return row * kTracksPerRow + track - 1; }

// (x_a1, x_a2, y_a, x_b1, x_b2, y_b, l)
using PairFeature = std::array<int, 7>;

struct InstTermPair {
  int a = 0;
  int b = 0;
  int net_id = 0;
  PairFeature feature{};
  bool operator==(const InstTermPair&) const = default;
};

enum class PadStrategy { PadEmpty, PadRandom };

struct RoutingInstance {
  std::string name;
  int width = 0;   // grid x extent is [0, width]
  int height = 0;  // rows * 7 global tracks
  int max_net_index = 0;
  std::vector<Bar> bars;  // every assigned instTerm
  std::vector<InstTermPair> pairs;
  int unassigned_count = 0;  // instTerms with no legal track; each counts as one opening
  int n_max = 0;
  std::vector<PairFeature> features;  // n_max rows; real pairs first
  std::vector<bool> mask;              // true for real slots
  PadStrategy pad = PadStrategy::PadEmpty;

  int real_count() const { return static_cast<int>(pairs.size()); }
};

// Minimum Manhattan distance between two horizontal bars.
int bar_distance(const Bar& a, const Bar& b);

std::vector<Bar> placed_bars(const Problem& p, const TrackAssignment& ta);

// Kruskal MST over the net's assigned members under bar_distance. Edges are
// ordered by (weight, min id, max id). Members missing from `ta` are skipped.
std::vector<InstTermPair> decompose_net(const Net& net, const std::vector<Bar>& bars, int net_index = 0);
std::vector<InstTermPair> decompose_net(const Problem& p, const Net& net, const TrackAssignment& ta,
                                        int net_index = 0);

// Concatenates per-net pairs in ascending net order and pads to n_max.
// n_max = 0 means "exactly the number of real pairs".
RoutingInstance decompose_problem(const Problem& p, const TrackAssignment& ta, int n_max = 0,
                                  PadStrategy strategy = PadStrategy::PadEmpty, std::uint64_t seed = 0);

// Convenience: assign tracks, then decompose.
RoutingInstance build_instance(const Problem& p, int n_max = 0, PadStrategy strategy = PadStrategy::PadEmpty,
                               std::uint64_t seed = 0);

// Rewrites the padding of an existing instance for a different n_max.
RoutingInstance repad(const RoutingInstance& inst, int n_max, PadStrategy strategy, std::uint64_t seed);

}  // namespace attnroute
