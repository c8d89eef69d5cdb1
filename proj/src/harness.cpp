#include "attnroute/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace attnroute {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int to_int(const std::string& s, std::string_view what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed " + std::string(what) + " '" + s + "'");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string problem_file_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04d.json", i);
  return buf;
}

}  // namespace

std::string_view to_string(Sequencer s) {
  switch (s) {
    case Sequencer::Attention: return "attention";
    case Sequencer::GA: return "ga";
    case Sequencer::Random: return "random";
    case Sequencer::Oracle: return "oracle";
  }
  return "?";
}

Sequencer parse_sequencer(std::string_view text) {
  if (text == "attention") return Sequencer::Attention;
  if (text == "ga") return Sequencer::GA;
  if (text == "random") return Sequencer::Random;
  if (text == "oracle") return Sequencer::Oracle;
  throw std::invalid_argument("unknown sequencer '" + std::string(text) + "'");
}

std::vector<int> oracle_order(const RoutingInstance& inst) {
  const int n = inst.real_count();
  if (n > kOracleMaxPairs)
    throw DataError("oracle sequencing refuses " + std::to_string(n) + " pairs (limit " +
                    std::to_string(kOracleMaxPairs) + ")");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> best = order;
  int best_cost = route_cost(inst, order);
  while (std::next_permutation(order.begin(), order.end())) {
    const int c = route_cost(inst, order);
    if (c < best_cost) {
      best_cost = c;
      best = order;
    }
  }
  return best;
}

std::vector<int> random_order(const RoutingInstance& inst, std::uint64_t seed) {
  Rng rng(seed);
  return rng.permutation(inst.real_count());
}

std::vector<int> sequence_instance(const RoutingInstance& inst, const RouteOptions& opt) {
  if (inst.real_count() == 0) return {};
  switch (opt.sequencer) {
    case Sequencer::Oracle: return oracle_order(inst);
    case Sequencer::Random: return random_order(inst, opt.seed);
    case Sequencer::GA: {
      GaParams ga = opt.ga;
      ga.seed = opt.seed;
      return ga_sequence(inst, ga).best_order;
    }
    case Sequencer::Attention: {
      if (!opt.policy) throw std::invalid_argument("attention sequencing needs a checkpoint");
      if (inst.n_max != opt.policy->n_max)
        throw DataError("instance '" + inst.name + "' is padded to " + std::to_string(inst.n_max) +
                        " slots but the checkpoint expects " + std::to_string(opt.policy->n_max));
      return greedy_rollout(inst, opt.policy->params).order;
    }
  }
  throw std::logic_error("unhandled sequencer");
}

RunReport run_instance(const RoutingInstance& inst, const RouteOptions& opt, RouteSolution* solution) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto order = sequence_instance(inst, opt);
  RouteSolution sol = route_sequence(inst, order);
  RunReport r;
  r.wall_seconds = seconds_since(t0);
  r.problem = inst.name;
  r.sequencer = opt.sequencer;
  r.cost = sol.cost;
  r.wirelength = sol.total_wirelength;
  r.opens = sol.open_count;
  r.seed = opt.seed;
  if (solution) *solution = std::move(sol);
  return r;
}

namespace {

RoutingInstance instance_for(const Problem& p, const PolicyCheckpoint* policy, PadStrategy pad, std::uint64_t seed) {
  RoutingInstance inst = build_instance(p);
  if (!policy) return inst;
  if (inst.real_count() > policy->n_max)
    throw DataError("problem '" + p.name + "' has " + std::to_string(inst.real_count()) +
                    " pairs but the checkpoint was trained for n_max " + std::to_string(policy->n_max));
  return repad(inst, policy->n_max, pad, seed);
}

PadStrategy checkpoint_pad(const PolicyCheckpoint& ckpt) {
  auto it = ckpt.meta.find("pad");
  return it != ckpt.meta.end() && it->second == "random" ? PadStrategy::PadRandom : PadStrategy::PadEmpty;
}

}  // namespace

RouteRun run_route(const Problem& p, const RouteOptions& opt) {
  if (opt.sequencer == Sequencer::Attention && !opt.policy)
    throw std::invalid_argument("attention sequencing needs a checkpoint");
  RouteRun run;
  run.instance = instance_for(p, opt.sequencer == Sequencer::Attention ? opt.policy : nullptr, opt.pad, opt.seed);
  run.report = run_instance(run.instance, opt, &run.solution);
  run.report.problem = p.name;
  return run;
}

// ---- files ----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

Problem load_problem(const fs::path& path) {
  try {
    return parse_problem(read_file(path));
  } catch (const ProblemError& e) {
    throw ProblemError(path.string() + ": " + e.what());
  }
}

std::string report_csv_header() { return "problem,sequencer,cost,wirelength,opens,wall_seconds,seed\n"; }

std::string report_csv_row(const RunReport& r) {
  std::ostringstream os;
  os << r.problem << ',' << to_string(r.sequencer) << ',' << r.cost << ',' << r.wirelength << ',' << r.opens << ','
     << fmt_double(r.wall_seconds) << ',' << r.seed << '\n';
  return os.str();
}

std::string solution_csv(const RouteSolution& sol, const RoutingInstance& inst) {
  std::ostringstream os;
  os << "pair_index,net,status,wirelength,path\n";
  for (std::size_t i = 0; i < sol.results.size(); ++i) {
    const auto& r = sol.results[i];
    os << i << ',' << inst.pairs[i].net_id << ',' << (r.open ? "open" : "routed") << ',' << r.wirelength() << ',';
    if (!r.open) {
      const auto corners = r.path.corners();
      for (std::size_t k = 0; k < corners.size(); ++k) os << (k ? ";" : "") << corners[k].x << ' ' << corners[k].y;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<SolutionRow> parse_solution_csv(std::string_view text) {
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != "pair_index,net,status,wirelength,path")
    throw DataError("solution file lacks the header 'pair_index,net,status,wirelength,path'");
  std::vector<SolutionRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = split(lines[li], ',');
    if (f.size() != 5) throw DataError("solution line " + std::to_string(li + 1) + ": expected 5 fields");
    SolutionRow row;
    row.pair_index = to_int(f[0], "pair index");
    row.net = to_int(f[1], "net");
    if (f[2] != "open" && f[2] != "routed")
      throw DataError("solution line " + std::to_string(li + 1) + ": unknown status '" + f[2] + "'");
    row.open = f[2] == "open";
    row.wirelength = to_int(f[3], "wirelength");
    if (!f[4].empty())
      for (const auto& pt : split(f[4], ';')) {
        const auto xy = split(pt, ' ');
        if (xy.size() != 2) throw DataError("solution line " + std::to_string(li + 1) + ": bad point '" + pt + "'");
        row.corners.push_back({to_int(xy[0], "x"), to_int(xy[1], "y")});
      }
    if (!row.open && row.corners.empty())
      throw DataError("solution line " + std::to_string(li + 1) + ": routed pair without a path");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_svg(const RoutingInstance& inst, const std::vector<SolutionRow>& rows) {
  constexpr int kScale = 10;
  constexpr int kMargin = 20;
  static const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b",
                                         "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#d62728"};
  auto px = [](int v) { return kMargin + v * kScale; };
  const int w = 2 * kMargin + inst.width * kScale;
  const int h = 2 * kMargin + std::max(0, inst.height - 1) * kScale;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
     << "  <title>" << inst.name << "</title>\n"
     << "  <rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  for (int y = 0; y < inst.height; ++y)
    os << "  <line class=\"track\" x1=\"" << px(0) << "\" y1=\"" << px(y) << "\" x2=\"" << px(inst.width)
       << "\" y2=\"" << px(y) << "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
  for (const auto& b : inst.bars)
    os << "  <line class=\"bar\" x1=\"" << px(b.x1) << "\" y1=\"" << px(b.y) << "\" x2=\"" << px(b.x2)
       << "\" y2=\"" << px(b.y) << "\" stroke=\"black\" stroke-width=\"4\" stroke-linecap=\"square\"/>\n";
  for (const auto& row : rows) {
    if (row.pair_index < 0 || row.pair_index >= inst.real_count())
      throw DataError("solution refers to pair " + std::to_string(row.pair_index) + " but the problem has " +
                      std::to_string(inst.real_count()));
    const auto& pair = inst.pairs[static_cast<std::size_t>(row.pair_index)];
    if (row.open) {
      const Bar a = bar_a(pair), b = bar_b(pair);
      const int cx = (px(a.x1) + px(a.x2) + px(b.x1) + px(b.x2)) / 4;
      const int cy = (px(a.y) + px(b.y)) / 2;
      os << "  <g class=\"open\" stroke=\"red\" stroke-width=\"2\"><line x1=\"" << cx - 4 << "\" y1=\"" << cy - 4
         << "\" x2=\"" << cx + 4 << "\" y2=\"" << cy + 4 << "\"/><line x1=\"" << cx - 4 << "\" y1=\"" << cy + 4
         << "\" x2=\"" << cx + 4 << "\" y2=\"" << cy - 4 << "\"/></g>\n";
      continue;
    }
    const char* colour = kPalette[static_cast<std::size_t>(pair.feature[6]) % std::size(kPalette)];
    os << "  <polyline class=\"route\" data-pair=\"" << row.pair_index << "\" fill=\"none\" stroke=\"" << colour
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < row.corners.size(); ++k)
      os << (k ? " " : "") << px(row.corners[k].x) << ',' << px(row.corners[k].y);
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---- datasets -------------------------------------------------------------

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  ojson doc;
  try {
    doc = ojson::parse(read_file(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest.string() + ": syntax error at byte " + std::to_string(e.byte));
  }
  Dataset ds;
  ds.dir = dir;
  try {
    const auto& s = doc.at("split");
    ds.train = s.at("train").get<std::vector<std::string>>();
    ds.val = s.at("val").get<std::vector<std::string>>();
    ds.test = s.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest.string() + ": malformed split (" + e.what() + ")");
  }
  return ds;
}

std::vector<Problem> load_problems(const Dataset& ds, const std::vector<std::string>& files) {
  std::vector<Problem> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_problem(ds.dir / f));
  return out;
}

int max_pair_count(const std::vector<Problem>& problems) {
  int n = 0;
  for (const auto& p : problems) n = std::max(n, build_instance(p).real_count());
  return n;
}

std::vector<RoutingInstance> build_instances(const std::vector<Problem>& problems, int n_max, PadStrategy pad,
                                             std::uint64_t seed) {
  std::vector<RoutingInstance> out;
  out.reserve(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    RoutingInstance inst = build_instance(problems[i]);
    if (inst.real_count() > n_max)
      throw DataError("problem '" + problems[i].name + "' has " + std::to_string(inst.real_count()) +
                      " pairs, more than n_max " + std::to_string(n_max));
    out.push_back(repad(inst, n_max, pad, mix_seed(seed, i)));
  }
  return out;
}

// ---- subcommands ----------------------------------------------------------

void cmd_gen(const GenArgs& args) {
  if (args.count < 1) throw std::invalid_argument("count must be positive");
  GenConfig cfg;
  if (!args.config.empty()) cfg = parse_gen_config(read_file(args.config));
  if (args.seed) cfg.seed = *args.seed;
  const std::uint64_t base = cfg.seed;

  ojson manifest;
  manifest["generator"] = ojson::parse(serialize_gen_config(cfg));
  manifest["seed"] = base;
  manifest["count"] = args.count;
  ojson files = ojson::array();
  std::vector<std::string> names;
  for (int i = 0; i < args.count; ++i) {
    GenConfig c = cfg;
    c.seed = mix_seed(base, static_cast<std::uint64_t>(i));
    const std::string file = problem_file_name(i);
    c.name = file.substr(0, file.size() - 5);
    const Problem p = generate_problem(c);
    if (const auto v = validate_problem(p); !v.empty())
      throw std::logic_error("generated problem " + c.name + " violates " + v.front().rule);
    write_file_atomic(args.out_dir / file, serialize_problem(p));
    files.push_back({{"file", file}, {"seed", c.seed}});
    names.push_back(file);
  }
  manifest["problems"] = files;
  const std::uint64_t split_seed = mix_seed(base, 0x5eed);
  const auto idx = split_indices(names.size(), kSplitRatios, split_seed);
  ojson split;
  split["ratios"] = {kSplitRatios[0], kSplitRatios[1], kSplitRatios[2]};
  split["seed"] = split_seed;
  const char* keys[3] = {"train", "val", "test"};
  for (std::size_t k = 0; k < 3; ++k) {
    ojson list = ojson::array();
    for (auto i : idx[k]) list.push_back(names[i]);
    split[keys[k]] = list;
  }
  manifest["split"] = split;
  write_file_atomic(args.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

RunReport cmd_route(const RouteArgs& args) {
  const Problem p = load_problem(args.problem);
  RouteOptions opt = args.options;
  std::optional<PolicyCheckpoint> ckpt;
  if (opt.sequencer == Sequencer::Attention) {
    if (args.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required for the attention sequencer");
    ckpt = load_policy(args.checkpoint.string());
    opt.policy = &*ckpt;
    opt.pad = checkpoint_pad(*ckpt);
  }
  const RouteRun run = run_route(p, opt);
  if (!args.solution.empty()) write_file_atomic(args.solution, solution_csv(run.solution, run.instance));
  if (!args.report.empty()) write_file_atomic(args.report, report_csv_header() + report_csv_row(run.report));
  if (!args.svg.empty()) {
    const auto rows = parse_solution_csv(solution_csv(run.solution, run.instance));
    write_file_atomic(args.svg, render_svg(run.instance, rows));
  }
  return run.report;
}

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream os;
  os << "epoch,train_mean_cost,val_mean_cost,baseline_refreshed\n";
  for (const auto& r : curve)
    os << r.epoch << ',' << fmt_double(r.train_mean_cost) << ',' << fmt_double(r.val_mean_cost) << ','
       << (r.baseline_refreshed ? 1 : 0) << '\n';
  return os.str();
}

TrainResult cmd_train(const TrainArgs& args) {
  if (args.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  const Dataset ds = load_dataset(args.dataset);
  if (ds.train.empty()) throw DataError("dataset '" + args.dataset.string() + "' has no training problems");
  if (ds.val.empty()) throw DataError("dataset '" + args.dataset.string() + "' has no validation problems");
  const auto train_p = load_problems(ds, ds.train);
  const auto val_p = load_problems(ds, ds.val);
  const auto test_p = load_problems(ds, ds.test);
  const int n_max = std::max({max_pair_count(train_p), max_pair_count(val_p), max_pair_count(test_p), 1});
  const auto train = build_instances(train_p, n_max, args.pad, mix_seed(args.hyper.seed, 11));
  const auto val = build_instances(val_p, n_max, args.pad, mix_seed(args.hyper.seed, 12));
  for (const auto& inst : train)
    if (inst.real_count() == 0) throw DataError("training problem '" + inst.name + "' has no pairs to route");
  for (const auto& inst : val)
    if (inst.real_count() == 0) throw DataError("validation problem '" + inst.name + "' has no pairs to route");

  auto progress = [&](const EpochRecord& r) {
    if (args.quiet) return;
    std::cerr << "epoch " << r.epoch << "/" << args.hyper.epochs << "  train " << fmt_double(r.train_mean_cost, 2)
              << "  val " << fmt_double(r.val_mean_cost, 2) << (r.baseline_refreshed ? "  baseline refreshed" : "")
              << "\n";
  };
  TrainResult res = reinforce_train(train, val, args.hyper, progress);

  char val_text[64];
  std::snprintf(val_text, sizeof val_text, "%.17g", res.best_val_cost);
  save_policy(args.checkpoint.string(), res.best, n_max,
              {{"best_epoch", std::to_string(res.best_epoch)},
               {"best_val_cost", val_text},
               {"pad", args.pad == PadStrategy::PadRandom ? "random" : "empty"},
               {"seed", std::to_string(args.hyper.seed)}});
  fs::path curve = args.curve;
  if (curve.empty()) {
    curve = args.checkpoint;
    curve += ".curve.csv";
  }
  write_file_atomic(curve, curve_csv(res.curve));
  return res;
}

CompareResult compare_instances(const std::vector<RoutingInstance>& instances, const PolicyCheckpoint& policy,
                                const CompareArgs& args) {
  if (args.random_orders < 1) throw std::invalid_argument("need at least one random order per problem");
  CompareResult out;
  std::vector<double> speedups;
  for (const auto& inst : instances) {
    CompareRow row;
    row.problem = inst.name;
    RouteOptions att;
    att.sequencer = Sequencer::Attention;
    att.policy = &policy;
    att.seed = args.seed;
    const RunReport a = run_instance(inst, att);
    RouteOptions ga;
    ga.sequencer = Sequencer::GA;
    ga.ga = args.ga;
    ga.seed = args.seed;
    const RunReport g = run_instance(inst, ga);
    double random_total = 0.0;
    for (int k = 0; k < args.random_orders; ++k)
      random_total += route_cost(inst, random_order(inst, mix_seed(args.seed, static_cast<std::uint64_t>(k))));
    row.attention_cost = a.cost;
    row.attention_seconds = a.wall_seconds;
    row.ga_cost = g.cost;
    row.ga_seconds = g.wall_seconds;
    row.random_mean_cost = random_total / args.random_orders;
    speedups.push_back(g.wall_seconds / std::max(a.wall_seconds, 1e-12));
    out.rows.push_back(row);
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const CompareRow& x, const CompareRow& y) {
    return std::tie(x.ga_cost, x.problem) < std::tie(y.ga_cost, y.problem);
  });
  std::vector<double> att_costs, ga_costs;
  for (const auto& r : out.rows) {
    att_costs.push_back(r.attention_cost);
    ga_costs.push_back(r.ga_cost);
  }
  out.pearson = out.rows.size() >= 2 ? pearson(att_costs, ga_costs) : std::numeric_limits<double>::quiet_NaN();
  if (!speedups.empty()) {
    std::sort(speedups.begin(), speedups.end());
    const auto m = speedups.size();
    out.median_speedup = m % 2 ? speedups[m / 2] : 0.5 * (speedups[m / 2 - 1] + speedups[m / 2]);
  }
  return out;
}

std::string compare_csv(const CompareResult& r) {
  std::ostringstream os;
  os << "problem,attention_cost,attention_seconds,ga_cost,ga_seconds,random_mean_cost\n";
  for (const auto& row : r.rows)
    os << row.problem << ',' << row.attention_cost << ',' << fmt_double(row.attention_seconds) << ',' << row.ga_cost
       << ',' << fmt_double(row.ga_seconds) << ',' << fmt_double(row.random_mean_cost) << '\n';
  return os.str();
}

CompareResult cmd_compare(const CompareArgs& args) {
  const Dataset ds = load_dataset(args.dataset);
  const std::vector<std::string>* files = nullptr;
  if (args.split == "train") files = &ds.train;
  else if (args.split == "val") files = &ds.val;
  else if (args.split == "test") files = &ds.test;
  else throw std::invalid_argument("unknown split '" + args.split + "'");
  const PolicyCheckpoint policy = load_policy(args.checkpoint.string());
  const auto problems = load_problems(ds, *files);
  const auto instances = build_instances(problems, policy.n_max, checkpoint_pad(policy), mix_seed(args.seed, 13));
  CompareResult res = compare_instances(instances, policy, args);
  if (!args.out.empty()) {
    write_file_atomic(args.out, compare_csv(res));
    ojson summary;
    summary["problems"] = res.rows.size();
    summary["pearson"] = std::isfinite(res.pearson) ? ojson(res.pearson) : ojson(nullptr);
    summary["median_speedup"] = res.median_speedup;
    fs::path path = args.out;
    path += ".summary.json";
    write_file_atomic(path, summary.dump(2) + "\n");
  }
  return res;
}

std::string cmd_export_svg(const ExportArgs& args) {
  const Problem p = load_problem(args.problem);
  const RoutingInstance inst = build_instance(p);
  const auto rows = parse_solution_csv(read_file(args.solution));
  std::string svg = render_svg(inst, rows);
  if (!args.out.empty()) write_file_atomic(args.out, svg);
  return svg;
}

}  // namespace attnroute
