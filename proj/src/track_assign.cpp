#include "attnroute/track_assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

namespace attnroute {

namespace {

bool intersects(int a1, int a2, int b1, int b2) { return std::max(a1, b1) <= std::min(a2, b2); }

}  // namespace

bool OverlapGraph::adjacent(int a, int b) const {
  const auto key = std::minmax(a, b);
  return std::binary_search(edges.begin(), edges.end(), std::pair<int, int>(key.first, key.second));
}

std::vector<int> eligible_tracks(const InstTerm& it, const WspConfig& wsp) { return wsp.tracks_for(it.kind); }

double preferred_track(const InstTerm& it, const WspConfig& wsp) {
  const auto& t = wsp.tracks_for(it.kind);
  if (t.empty()) return 0.0;
  const std::size_t n = t.size();
  return n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

OverlapGraph build_overlap_graph(const Problem& p) {
  OverlapGraph g;
  for (const auto& it : p.instterms) {
    g.nodes.push_back(it.id);
    g.by_row[it.row].push_back(it.id);
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  for (auto& [row, ids] : g.by_row) {
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const InstTerm* a = p.find(ids[i]);
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const InstTerm* b = p.find(ids[j]);
        if (a->net != b->net && intersects(a->x1, a->x2, b->x1, b->x2)) g.edges.emplace_back(a->id, b->id);
      }
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

std::vector<int> max_clique(const Problem& p, const std::vector<int>& candidates) {
  std::vector<const InstTerm*> terms;
  for (int id : candidates) terms.push_back(p.find(id));
  std::sort(terms.begin(), terms.end(), [](const InstTerm* a, const InstTerm* b) {
    return std::tie(a->x1, a->id) < std::tie(b->x1, b->id);
  });
  std::vector<int> best;
  for (const InstTerm* probe : terms) {
    const int x = probe->x1;
    // One representative per net: the active interval with smallest (x1, id).
    std::map<int, const InstTerm*> rep;
    for (const InstTerm* t : terms) {
      if (t->x1 > x) break;
      if (t->x2 < x) continue;
      rep.emplace(t->net, t);
    }
    if (rep.size() > best.size()) {
      best.clear();
      for (const auto& [net, t] : rep) best.push_back(t->id);
    }
  }
  std::sort(best.begin(), best.end());
  return best;
}

std::vector<int> max_clique(const Problem& p, const OverlapGraph& g, int row) {
  auto it = g.by_row.find(row);
  if (it == g.by_row.end()) return {};
  return max_clique(p, it->second);
}

AssignmentGraph::AssignmentGraph(const Problem& p) : problem_(&p) {}

const std::vector<OccupiedInterval>& AssignmentGraph::occupancy(Slot s) const {
  static const std::vector<OccupiedInterval> empty;
  auto it = occupancy_.find(s);
  return it == occupancy_.end() ? empty : it->second;
}

bool AssignmentGraph::assignable(const InstTerm& it, Slot s) const {
  if (s.row != it.row) return false;
  const auto& ok = problem_->wsp.tracks_for(it.kind);
  if (std::find(ok.begin(), ok.end(), s.track) == ok.end()) return false;
  for (const auto& occ : occupancy(s))
    if (occ.net != it.net && intersects(occ.x1, occ.x2, it.x1, it.x2)) return false;
  return true;
}

std::vector<Slot> AssignmentGraph::candidates(const InstTerm& it) const {
  std::vector<Slot> out;
  for (int t : problem_->wsp.tracks_for(it.kind)) {
    const Slot s{it.row, t};
    if (assignable(it, s)) out.push_back(s);
  }
  return out;
}

int AssignmentGraph::occupied_length(Slot s) const {
  auto iv = occupancy(s);
  std::sort(iv.begin(), iv.end(), [](const auto& a, const auto& b) { return a.x1 < b.x1; });
  int total = 0;
  int cur1 = 0;
  int cur2 = -1;
  bool open = false;
  for (const auto& o : iv) {
    if (!open || o.x1 > cur2) {
      if (open) total += cur2 - cur1;
      cur1 = o.x1;
      cur2 = o.x2;
      open = true;
    } else {
      cur2 = std::max(cur2, o.x2);
    }
  }
  if (open) total += cur2 - cur1;
  return total;
}

double AssignmentGraph::cost(const InstTerm& it, Slot s) const {
  const double width = std::max(1, problem_->wsp.width);
  const double crowding = 1.0 + occupied_length(s) / width;
  return it.length() * crowding + 0.01 * std::abs(s.track - preferred_track(it, problem_->wsp));
}

void AssignmentGraph::occupy(const InstTerm& it, Slot s) { occupancy_[s].push_back({it.x1, it.x2, it.net}); }

Matching min_cost_matching(int members, int slots, const std::vector<MatchEdge>& edges) {
  Matching out;
  out.slot_of.assign(static_cast<std::size_t>(members), -1);
  if (members == 0) return out;

  // Square-up with one dummy column per member. Dummy cost outweighs any real
  // total so cardinality is maximized first; missing edges are prohibitive.
  double real_sum = 1.0;
  for (const auto& e : edges) real_sum += std::abs(e.cost);
  const double dummy = real_sum * 2.0;
  const double forbidden = dummy * (members + 1) * 4.0;
  const std::size_t n = static_cast<std::size_t>(members);
  const std::size_t k = static_cast<std::size_t>(slots);
  const std::size_t m = k + n;
  std::vector<std::vector<double>> a(n, std::vector<double>(m, forbidden));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = k; j < m; ++j) a[i][j] = dummy;
  for (const auto& e : edges) a[static_cast<std::size_t>(e.member)][static_cast<std::size_t>(e.slot)] = e.cost;

  // Hungarian algorithm with potentials; rows and columns 1-based, 0 is the sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> row_of(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= k; ++j) {
    const std::size_t i = row_of[j];
    if (i == 0 || a[i - 1][j - 1] >= forbidden) continue;
    out.slot_of[i - 1] = static_cast<int>(j - 1);
    out.total_cost += a[i - 1][j - 1];
  }
  return out;
}

CliqueMatch match_clique(const AssignmentGraph& ag, const std::vector<int>& clique) {
  const Problem& p = ag.problem();
  CliqueMatch cm;
  cm.members = clique;
  std::sort(cm.members.begin(), cm.members.end());

  std::vector<Slot> slots;
  std::vector<std::vector<Slot>> cand;
  for (int id : cm.members) {
    cand.push_back(ag.candidates(*p.find(id)));
    for (Slot s : cand.back()) slots.push_back(s);
  }
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());

  std::vector<MatchEdge> edges;
  for (std::size_t i = 0; i < cm.members.size(); ++i) {
    const InstTerm& it = *p.find(cm.members[i]);
    for (Slot s : cand[i]) {
      const auto j = std::lower_bound(slots.begin(), slots.end(), s) - slots.begin();
      edges.push_back({static_cast<int>(i), static_cast<int>(j), ag.cost(it, s)});
    }
  }
  const Matching m = min_cost_matching(static_cast<int>(cm.members.size()), static_cast<int>(slots.size()), edges);
  for (std::size_t i = 0; i < cm.members.size(); ++i) {
    const int j = m.slot_of[i];
    cm.candidate_count.push_back(static_cast<int>(cand[i].size()));
    if (j < 0) {
      cm.slot.emplace_back(std::nullopt);
      cm.cost.push_back(0.0);
    } else {
      const Slot s = slots[static_cast<std::size_t>(j)];
      cm.slot.emplace_back(s);
      cm.cost.push_back(ag.cost(*p.find(cm.members[i]), s));
    }
  }
  return cm;
}

namespace {

// True when `it` may sit on track `track` of its row given every other mapped
// instTerm except `ignore`.
bool fits(const Problem& p, const std::map<int, Slot>& slots, const InstTerm& it, int track, int ignore) {
  for (const auto& [id, s] : slots) {
    if (id == ignore || id == it.id || s.row != it.row || s.track != track) continue;
    const InstTerm& other = *p.find(id);
    if (other.net != it.net && intersects(other.x1, other.x2, it.x1, it.x2)) return false;
  }
  return true;
}

// Puts `it` on `track`, first moving every instTerm that conflicts with it
// there to another eligible track, recursively up to `depth` levels. `trial`
// is only modified on success.
bool place(const Problem& p, std::map<int, Slot>& trial, const InstTerm& it, int track, int depth,
           std::set<int>& moving) {
  std::map<int, Slot> next = trial;
  next[it.id] = Slot{it.row, track};
  moving.insert(it.id);
  bool ok = true;
  for (const auto& [id, s] : trial) {
    if (id == it.id || s.row != it.row || s.track != track) continue;
    const InstTerm& b = *p.find(id);
    if (b.net == it.net || !intersects(b.x1, b.x2, it.x1, it.x2)) continue;
    if (depth == 0 || moving.count(b.id)) {
      ok = false;
      break;
    }
    next.erase(b.id);
    bool moved = false;
    for (int alt : p.wsp.tracks_for(b.kind)) {
      if (alt == track) continue;
      if (place(p, next, b, alt, depth - 1, moving)) {
        moved = true;
        break;
      }
    }
    if (!moved) {
      ok = false;
      break;
    }
  }
  moving.erase(it.id);
  if (ok) trial = std::move(next);
  return ok;
}

// The clique-by-clique loop cannot see that a flexible instTerm took one of
// the few tracks a GSD instTerm may use. Each leftover instTerm gets its first
// eligible track on which the blockers can be moved aside.
void repair_unassigned(const Problem& p, TrackAssignment& ta) {
  constexpr int kRepairDepth = 2;
  std::vector<int> still;
  for (int uid : ta.unassigned) {
    const InstTerm& u = *p.find(uid);
    bool placed = false;
    for (int track : p.wsp.tracks_for(u.kind)) {
      std::set<int> moving;
      if (place(p, ta.slots, u, track, kRepairDepth, moving)) {
        placed = true;
        break;
      }
    }
    if (!placed) still.push_back(uid);
  }
  ta.unassigned = std::move(still);
  std::sort(ta.unassigned.begin(), ta.unassigned.end());
}

// Single-instTerm track moves that lower evaluate_assignment, taken greedily
// in id order until none helps.
void improve(const Problem& p, TrackAssignment& ta) {
  double cost = evaluate_assignment(p, ta.slots);
  for (bool changed = true; changed;) {
    changed = false;
    for (auto& [id, slot] : ta.slots) {
      const InstTerm& it = *p.find(id);
      const Slot original = slot;
      for (int track : p.wsp.tracks_for(it.kind)) {
        if (track == original.track || !fits(p, ta.slots, it, track, id)) continue;
        slot.track = track;
        const double c = evaluate_assignment(p, ta.slots);
        if (c < cost - 1e-12) {
          cost = c;
          changed = true;
          break;
        }
        slot = original;
      }
    }
  }
}

}  // namespace

TrackAssignment assign_tracks(const Problem& p) {
  TrackAssignment ta;
  AssignmentGraph ag(p);
  const OverlapGraph og = build_overlap_graph(p);

  std::map<int, std::vector<int>> remaining = og.by_row;
  auto count_remaining = [&] {
    std::size_t n = 0;
    for (const auto& [row, ids] : remaining) n += ids.size();
    return n;
  };

  while (true) {
    // Nodes with no legal slot stay unassignable: occupancy only grows.
    for (auto& [row, ids] : remaining) {
      std::vector<int> keep;
      for (int id : ids) {
        if (ag.candidates(*p.find(id)).empty())
          ta.unassigned.push_back(id);
        else
          keep.push_back(id);
      }
      ids = std::move(keep);
    }
    if (count_remaining() == 0) break;

    std::vector<int> clique;
    for (const auto& [row, ids] : remaining) {
      if (ids.empty()) continue;
      auto c = max_clique(p, ids);
      if (c.size() > clique.size()) clique = std::move(c);
    }

    const CliqueMatch cm = match_clique(ag, clique);
    std::vector<std::size_t> commit;
    for (std::size_t i = 0; i < cm.members.size(); ++i)
      if (cm.slot[i] && cm.candidate_count[i] == 1) commit.push_back(i);
    if (commit.empty()) {
      // No forced member: commit one matched pair to guarantee progress. The
      // most constrained member goes first so flexible kinds do not take the
      // few tracks a GSD instTerm can use; cost breaks ties.
      std::size_t best = cm.members.size();
      for (std::size_t i = 0; i < cm.members.size(); ++i) {
        if (!cm.slot[i]) continue;
        if (best == cm.members.size() ||
            cm.cost[i] < cm.cost[best])
          best = i;
      }
      commit.push_back(best);
    }
    for (std::size_t i : commit) {
      const InstTerm& it = *p.find(cm.members[i]);
      ag.occupy(it, *cm.slot[i]);
      ta.slots[it.id] = *cm.slot[i];
      ta.total_cost += cm.cost[i];
      auto& ids = remaining[it.row];
      ids.erase(std::find(ids.begin(), ids.end(), it.id));
    }
  }
  repair_unassigned(p, ta);
  improve(p, ta);
  ta.total_cost = evaluate_assignment(p, ta.slots);
  return ta;
}

Problem apply_assignment(Problem p, const TrackAssignment& ta) {
  for (auto& it : p.instterms) {
    auto s = ta.slots.find(it.id);
    if (s == ta.slots.end())
      it.track.reset();
    else
      it.track = s->second.track;
  }
  return p;
}

double evaluate_assignment(const Problem& p, const std::map<int, Slot>& slots) {
  AssignmentGraph ag(p);
  double total = 0.0;
  for (const auto& [id, s] : slots) {
    const InstTerm& it = *p.find(id);
    total += ag.cost(it, s);
    ag.occupy(it, s);
  }
  return total;
}

std::vector<std::string> check_assignment(const Problem& p, const TrackAssignment& ta) {
  std::vector<std::string> out;
  for (const auto& [id, s] : ta.slots) {
    const InstTerm* it = p.find(id);
    if (it == nullptr) {
      out.push_back("unknown instTerm " + std::to_string(id));
      continue;
    }
    if (s.row != it->row) out.push_back("instTerm " + std::to_string(id) + " assigned off its row");
    const auto ok = eligible_tracks(*it, p.wsp);
    if (std::find(ok.begin(), ok.end(), s.track) == ok.end())
      out.push_back("instTerm " + std::to_string(id) + " on ineligible track " + std::to_string(s.track));
  }
  for (auto a = ta.slots.begin(); a != ta.slots.end(); ++a) {
    for (auto b = std::next(a); b != ta.slots.end(); ++b) {
      if (a->second != b->second) continue;
      const InstTerm* x = p.find(a->first);
      const InstTerm* y = p.find(b->first);
      if (x && y && x->net != y->net && intersects(x->x1, x->x2, y->x1, y->x2))
        out.push_back("conflict between " + std::to_string(x->id) + " and " + std::to_string(y->id));
    }
  }
  for (int id : ta.unassigned)
    if (ta.slots.count(id)) out.push_back("instTerm " + std::to_string(id) + " both assigned and unassigned");
  if (ta.slots.size() + ta.unassigned.size() != p.instterms.size()) out.push_back("assignment is not total");
  return out;
}

std::string dump_graphs(const Problem& p) {
  std::ostringstream os;
  const OverlapGraph og = build_overlap_graph(p);
  os << "overlap_graph nodes " << og.nodes.size() << " edges " << og.edges.size() << "\n";
  for (auto [a, b] : og.edges) os << "  edge " << a << " " << b << "\n";
  AssignmentGraph ag(p);
  os << "assignment_graph\n";
  for (const auto& it : p.instterms) {
    os << "  node " << it.id << " kind " << to_string(it.kind) << " row " << it.row << ":";
    for (Slot s : ag.candidates(it)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " t%d=%.2f", s.track, ag.cost(it, s));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace attnroute
