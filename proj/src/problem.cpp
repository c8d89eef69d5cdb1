#include "attnroute/problem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "attnroute/rng.hpp"
#include "json.hpp"

namespace attnroute {

using ojson = nlohmann::ordered_json;

std::string_view to_string(TermKind kind) {
  switch (kind) {
    case TermKind::G: return "G";
    case TermKind::SD: return "SD";
    case TermKind::GSD: return "GSD";
  }
  return "?";
}

TermKind parse_kind(std::string_view text) {
  if (text == "G") return TermKind::G;
  if (text == "SD") return TermKind::SD;
  if (text == "GSD") return TermKind::GSD;
  throw ProblemError("unknown instTerm kind '" + std::string(text) + "'");
}

const std::vector<int>& WspConfig::tracks_for(TermKind kind) const {
  switch (kind) {
    case TermKind::G: return g_tracks;
    case TermKind::SD: return sd_tracks;
    case TermKind::GSD: return gsd_tracks;
  }
  return sd_tracks;
}

const InstTerm* Problem::find(int id) const {
  for (const auto& it : instterms)
    if (it.id == id) return &it;
  return nullptr;
}

std::vector<Net> derive_nets(const std::vector<InstTerm>& instterms) {
  std::map<int, std::vector<int>> groups;
  for (const auto& it : instterms) groups[it.net].push_back(it.id);
  std::vector<Net> nets;
  nets.reserve(groups.size());
  for (auto& [net_id, members] : groups) {
    std::sort(members.begin(), members.end());
    nets.push_back(Net{net_id, std::move(members)});
  }
  return nets;
}

Problem canonicalize(Problem p) {
  std::stable_sort(p.instterms.begin(), p.instterms.end(),
                   [](const InstTerm& a, const InstTerm& b) { return a.id < b.id; });
  p.nets = derive_nets(p.instterms);
  return p;
}

namespace {

int require_int(const ojson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ProblemError(where + ": missing key '" + key + "'");
  if (!it->is_number_integer()) throw ProblemError(where + ": key '" + key + "' must be an integer");
  return it->get<int>();
}

std::string describe(const Violation& v) {
  std::string s = v.rule + " (id " + std::to_string(v.entity) + ")";
  if (!v.detail.empty()) s += ": " + v.detail;
  return s;
}

}  // namespace

Problem parse_problem(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ProblemError("syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ProblemError("syntax error: top level must be an object");

  Problem p;
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) throw ProblemError("problem: 'name' must be a string");
    p.name = it->get<std::string>();
  }
  auto wsp = doc.find("wsp");
  if (wsp == doc.end() || !wsp->is_object()) throw ProblemError("problem: missing object 'wsp'");
  p.wsp.rows = require_int(*wsp, "rows", "wsp");
  p.wsp.width = require_int(*wsp, "width", "wsp");

  auto terms = doc.find("instterms");
  if (terms == doc.end() || !terms->is_array()) throw ProblemError("problem: missing array 'instterms'");
  for (std::size_t i = 0; i < terms->size(); ++i) {
    const auto& node = (*terms)[i];
    const std::string where = "instterms[" + std::to_string(i) + "]";
    if (!node.is_object()) throw ProblemError(where + ": must be an object");
    InstTerm it;
    it.id = require_int(node, "id", where);
    const std::string named = "instTerm " + std::to_string(it.id);
    it.net = require_int(node, "net", named);
    auto kind = node.find("kind");
    if (kind == node.end() || !kind->is_string()) throw ProblemError(named + ": missing string 'kind'");
    try {
      it.kind = parse_kind(kind->get<std::string>());
    } catch (const ProblemError& e) {
      throw ProblemError(named + ": " + e.what());
    }
    it.x1 = require_int(node, "x1", named);
    it.x2 = require_int(node, "x2", named);
    it.row = require_int(node, "row", named);
    if (node.contains("track")) it.track = require_int(node, "track", named);
    p.instterms.push_back(it);
  }
  p = canonicalize(std::move(p));

  auto violations = validate_problem(p);
  if (!violations.empty()) {
    std::string msg = "semantic error: " + describe(violations.front());
    if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
    throw ProblemError(msg);
  }
  return p;
}

std::string serialize_problem(const Problem& in) {
  const Problem p = canonicalize(in);
  ojson doc;
  doc["name"] = p.name;
  doc["wsp"] = ojson{{"rows", p.wsp.rows}, {"width", p.wsp.width}};
  auto terms = ojson::array();
  for (const auto& it : p.instterms) {
    ojson t;
    t["id"] = it.id;
    t["net"] = it.net;
    t["kind"] = std::string(to_string(it.kind));
    t["x1"] = it.x1;
    t["x2"] = it.x2;
    t["row"] = it.row;
    if (it.track) t["track"] = *it.track;
    terms.push_back(std::move(t));
  }
  doc["instterms"] = std::move(terms);
  return doc.dump(2) + "\n";
}

std::vector<Violation> validate_problem(const Problem& p) {
  std::vector<Violation> out;
  const auto& w = p.wsp;
  if (w.rows < 1) out.push_back({"wsp-rows", 0, "rows must be >= 1"});
  if (w.width < 1) out.push_back({"wsp-width", 0, "width must be >= 1"});
  {
    std::vector<int> both;
    std::set_intersection(w.g_tracks.begin(), w.g_tracks.end(), w.sd_tracks.begin(), w.sd_tracks.end(),
                          std::back_inserter(both));
    bool ok = both == w.gsd_tracks;
    for (const auto* set : {&w.g_tracks, &w.sd_tracks, &w.gsd_tracks})
      for (int t : *set) ok = ok && t >= 1 && t <= w.tracks_per_row;
    if (!ok) out.push_back({"wsp-tracks", 0, "track sets inconsistent"});
  }

  std::set<int> seen;
  for (const auto& it : p.instterms) {
    if (!seen.insert(it.id).second) {
      out.push_back({"duplicate-id", it.id, "instTerm id appears more than once"});
      continue;
    }
    if (it.x1 > it.x2) out.push_back({"x-order", it.id, "x2 < x1"});
    if (it.x1 < 0 || it.x2 > w.width) out.push_back({"x-range", it.id, "x-range outside [0, width]"});
    if (it.row < 0 || it.row >= w.rows) out.push_back({"row-range", it.id, "row outside [0, rows)"});
    if (it.track) {
      const auto& ok = w.tracks_for(it.kind);
      if (std::find(ok.begin(), ok.end(), *it.track) == ok.end())
        out.push_back({"track-ineligible", it.id, "track not allowed for kind"});
    }
  }

  std::set<int> netted;
  std::set<int> net_ids;
  for (const auto& net : p.nets) {
    if (!net_ids.insert(net.net_id).second) out.push_back({"duplicate-net", net.net_id, ""});
    if (net.members.empty()) out.push_back({"empty-net", net.net_id, "net has no members"});
    for (int m : net.members) {
      const InstTerm* it = p.find(m);
      if (it == nullptr) {
        out.push_back({"dangling-member", m, "net " + std::to_string(net.net_id) + " references missing instTerm"});
        continue;
      }
      if (it->net != net.net_id)
        out.push_back({"net-mismatch", m, "listed in net " + std::to_string(net.net_id)});
      if (!netted.insert(m).second) out.push_back({"multi-net", m, "instTerm listed twice"});
    }
  }
  for (int id : seen)
    if (!netted.count(id)) out.push_back({"unnetted", id, "instTerm belongs to no net"});
  return out;
}

namespace {

// Largest stacking depth over [a, b] once the candidate is added.
int depth_with(const std::vector<std::pair<int, int>>& row, int a, int b) {
  std::vector<int> probes{a};
  for (auto [x1, x2] : row)
    if (x1 >= a && x1 <= b) probes.push_back(x1);
  int best = 0;
  for (int x : probes) {
    int d = 1;
    for (auto [x1, x2] : row)
      if (x1 <= x && x <= x2) ++d;
    best = std::max(best, d);
  }
  return best;
}

}  // namespace

void validate_gen_config(const GenConfig& cfg) {
  if (cfg.n_min < 2 || cfg.n_min > cfg.n_max) throw ProblemError("gen config: invalid instTerm range");
  if (cfg.nets_min < 1 || cfg.nets_min > cfg.nets_max) throw ProblemError("gen config: invalid net range");
  if (cfg.rows < 1 || cfg.width < 1 || cfg.max_term_length < 1 || cfg.max_depth < 1)
    throw ProblemError("gen config: rows, width, max_term_length and max_depth must be positive");
  double mix_sum = 0;
  for (double q : cfg.kind_mix) {
    if (q < 0 || q > 1) throw ProblemError("gen config: kind_mix entries must lie in [0,1]");
    mix_sum += q;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) throw ProblemError("gen config: kind_mix must sum to 1");
}

Problem generate_problem(const GenConfig& cfg) {
  validate_gen_config(cfg);
  Rng rng(cfg.seed);
  const int n = static_cast<int>(rng.uniform_int(cfg.n_min, cfg.n_max));
  // Closed unit-length intervals need a gap, so a row fits (width+1)/2 per layer.
  const long capacity = static_cast<long>(cfg.rows) * cfg.max_depth * ((cfg.width + 1) / 2);
  if (n > capacity)
    throw ProblemError("gen config infeasible: " + std::to_string(n) + " instTerms exceed capacity " +
                       std::to_string(capacity) + " of " + std::to_string(cfg.rows) + " row(s) x width " +
                       std::to_string(cfg.width));
  if (cfg.nets_min * 2 > n)
    throw ProblemError("gen config infeasible: " + std::to_string(cfg.nets_min) +
                       " nets of >= 2 members need more than " + std::to_string(n) + " instTerms");
  const int nets = static_cast<int>(rng.uniform_int(cfg.nets_min, std::min(cfg.nets_max, n / 2)));

  std::vector<std::vector<std::pair<int, int>>> rows(static_cast<std::size_t>(cfg.rows));
  Problem p;
  p.name = cfg.name;
  p.wsp.rows = cfg.rows;
  p.wsp.width = cfg.width;
  const int max_len = std::min(cfg.max_term_length, cfg.width);

  for (int id = 0; id < n; ++id) {
    InstTerm it;
    it.id = id;
    const double u = rng.uniform01();
    it.kind = u < cfg.kind_mix[0] ? TermKind::G : (u < cfg.kind_mix[0] + cfg.kind_mix[1] ? TermKind::SD : TermKind::GSD);
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const int row = static_cast<int>(rng.uniform_int(0, cfg.rows - 1));
      const int len = static_cast<int>(rng.uniform_int(1, max_len));
      const int x1 = static_cast<int>(rng.uniform_int(0, cfg.width - len));
      auto& occ = rows[static_cast<std::size_t>(row)];
      if (depth_with(occ, x1, x1 + len) <= cfg.max_depth) {
        occ.emplace_back(x1, x1 + len);
        it.row = row;
        it.x1 = x1;
        it.x2 = x1 + len;
        placed = true;
      }
    }
    // Deterministic fallback scan for crowded layouts.
    for (int row = 0; row < cfg.rows && !placed; ++row) {
      auto& occ = rows[static_cast<std::size_t>(row)];
      for (int x1 = 0; x1 + 1 <= cfg.width && !placed; ++x1) {
        if (depth_with(occ, x1, x1 + 1) <= cfg.max_depth) {
          occ.emplace_back(x1, x1 + 1);
          it.row = row;
          it.x1 = x1;
          it.x2 = x1 + 1;
          placed = true;
        }
      }
    }
    if (!placed)
      throw ProblemError("gen config infeasible: could not place instTerm " + std::to_string(id) +
                         " without exceeding depth " + std::to_string(cfg.max_depth));
    p.instterms.push_back(it);
  }

  // Every net gets two members first, the rest join uniformly random nets.
  std::vector<int> order = rng.permutation(n);
  for (int k = 0; k < n; ++k) {
    const int id = order[static_cast<std::size_t>(k)];
    const int net = k < 2 * nets ? k / 2 : static_cast<int>(rng.uniform_int(0, nets - 1));
    p.instterms[static_cast<std::size_t>(id)].net = net;
  }
  p.nets = derive_nets(p.instterms);
  return p;
}

GenConfig parse_gen_config(std::string_view json_text) {
  ojson doc;
  try {
    doc = ojson::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ProblemError("gen config syntax error at byte " + std::to_string(e.byte));
  }
  GenConfig cfg;
  auto range = [&](const char* key, int& lo, int& hi) {
    if (!doc.contains(key)) return;
    const auto& v = doc[key];
    if (v.is_array() && v.size() == 2) {
      lo = v[0].get<int>();
      hi = v[1].get<int>();
    } else if (v.is_number_integer()) {
      lo = hi = v.get<int>();
    } else {
      throw ProblemError(std::string("gen config: '") + key + "' must be an integer or [lo, hi]");
    }
  };
  try {
    range("n_instterms", cfg.n_min, cfg.n_max);
    range("nets_count", cfg.nets_min, cfg.nets_max);
    cfg.rows = doc.value("rows", cfg.rows);
    cfg.width = doc.value("width", cfg.width);
    cfg.max_term_length = doc.value("max_term_length", cfg.max_term_length);
    cfg.max_depth = doc.value("max_depth", cfg.max_depth);
    if (doc.contains("kind_mix")) {
      const auto& m = doc["kind_mix"];
      if (!m.is_array() || m.size() != 3) throw ProblemError("gen config: kind_mix needs 3 entries");
      for (std::size_t i = 0; i < 3; ++i) cfg.kind_mix[i] = m[i].get<double>();
    }
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.name = doc.value("name", cfg.name);
  } catch (const nlohmann::json::exception& e) {
    throw ProblemError(std::string("gen config: ") + e.what());
  }
  validate_gen_config(cfg);
  return cfg;
}

std::string serialize_gen_config(const GenConfig& cfg) {
  ojson doc;
  doc["n_instterms"] = {cfg.n_min, cfg.n_max};
  doc["nets_count"] = {cfg.nets_min, cfg.nets_max};
  doc["rows"] = cfg.rows;
  doc["width"] = cfg.width;
  doc["max_term_length"] = cfg.max_term_length;
  doc["max_depth"] = cfg.max_depth;
  doc["kind_mix"] = {cfg.kind_mix[0], cfg.kind_mix[1], cfg.kind_mix[2]};
  doc["seed"] = cfg.seed;
  doc["name"] = cfg.name;
  return doc.dump(2) + "\n";
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0) throw std::invalid_argument("split ratios must be non-negative");
  const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[2] + 1e-9));
  return {n - val - test, val, test};
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> ratios,
                                                      std::uint64_t seed) {
  const auto sizes = split_sizes(n, ratios);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::array<std::vector<std::size_t>, 3> out;
  std::size_t k = 0;
  for (std::size_t part = 0; part < 3; ++part)
    for (std::size_t j = 0; j < sizes[part]; ++j) out[part].push_back(idx[k++]);
  return out;
}

}  // namespace attnroute
