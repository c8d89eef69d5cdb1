#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnroute/problem.hpp"

namespace attnroute {

struct Slot {
  int row = 0;
  int track = 0;  // 1-based
  auto operator<=>(const Slot&) const = default;
};

// Different-net, same-row instTerms whose closed x-ranges intersect.
struct OverlapGraph {
  std::vector<int> nodes;                   // instTerm ids, ascending
  std::vector<std::pair<int, int>> edges;   // (a, b) with a < b, ascending
  std::map<int, std::vector<int>> by_row;   // row -> ids, ascending

  bool adjacent(int a, int b) const;
};

struct OccupiedInterval {
  int x1 = 0;
  int x2 = 0;
  int net = 0;
};

// Bipartite instTerm -> slot graph plus per-slot occupancy u_t.
class AssignmentGraph {
 public:
  AssignmentGraph(const Problem& p);

  const Problem& problem() const { return *problem_; }

  // Legal slots for an instTerm against current occupancy, ascending by track.
  std::vector<Slot> candidates(const InstTerm& it) const;
  bool assignable(const InstTerm& it, Slot s) const;
  // Cost of placing `it` on `s` given current occupancy.
  double cost(const InstTerm& it, Slot s) const;
  // Union length of the intervals already on the slot.
  int occupied_length(Slot s) const;
  void occupy(const InstTerm& it, Slot s);

  const std::vector<OccupiedInterval>& occupancy(Slot s) const;

 private:
  const Problem* problem_;
  std::map<Slot, std::vector<OccupiedInterval>> occupancy_;
};

struct TrackAssignment {
  std::map<int, Slot> slots;   // instTerm id -> slot
  std::vector<int> unassigned;  // ascending ids
  double total_cost = 0.0;     // evaluate_assignment of `slots`
};

struct MatchEdge {
  int member = 0;  // index into the member list
  int slot = 0;    // index into the slot list
  double cost = 0.0;
};

struct Matching {
  // member index -> slot index, or -1 when unmatched
  std::vector<int> slot_of;
  double total_cost = 0.0;
};

std::vector<int> eligible_tracks(const InstTerm& it, const WspConfig& wsp);

// Median of the eligible track set; the assignment cost leans toward it.
double preferred_track(const InstTerm& it, const WspConfig& wsp);

OverlapGraph build_overlap_graph(const Problem& p);

// Maximum clique among `candidates` (ids on a single row) of the overlap graph.
// Exact: a clique of intervals shares a point, so the sweep over left
// endpoints that counts distinct nets finds it.
std::vector<int> max_clique(const Problem& p, const std::vector<int>& candidates);
std::vector<int> max_clique(const Problem& p, const OverlapGraph& g, int row);

// Maximum-cardinality, minimum-cost matching of members to distinct slots.
Matching min_cost_matching(int members, int slots, const std::vector<MatchEdge>& edges);

struct CliqueMatch {
  std::vector<int> members;                // instTerm ids
  std::vector<std::optional<Slot>> slot;   // per member
  std::vector<double> cost;                // per member, 0 when unmatched
  std::vector<int> candidate_count;        // per member
};

CliqueMatch match_clique(const AssignmentGraph& ag, const std::vector<int>& clique);

TrackAssignment assign_tracks(const Problem& p);

// Returns p with each instTerm's track filled from the assignment.
Problem apply_assignment(Problem p, const TrackAssignment& ta);

// Assignment cost of a complete mapping, committing in ascending id order
// with the same per-commit cost as assign_tracks. Used to compare mappings.
double evaluate_assignment(const Problem& p, const std::map<int, Slot>& slots);

// Empty when the mapping is legal; otherwise one message per problem found.
std::vector<std::string> check_assignment(const Problem& p, const TrackAssignment& ta);

// Node/edge text dump of both graphs for debugging.
std::string dump_graphs(const Problem& p);

}  // namespace attnroute
