#pragma once

// End-to-end pipeline (assign, decompose, sequence, route), file formats and
// the subcommand implementations behind the command-line tool.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "attnroute/attention.hpp"
#include "attnroute/ga.hpp"
#include "attnroute/pattern_route.hpp"
#include "attnroute/problem.hpp"

namespace attnroute {

// Bad or inconsistent input data (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Sequencer { Attention, GA, Random, Oracle };
std::string_view to_string(Sequencer s);
Sequencer parse_sequencer(std::string_view text);

inline constexpr int kOracleMaxPairs = 8;

struct RunReport {
  std::string problem;
  Sequencer sequencer = Sequencer::Random;
  int cost = 0;
  int wirelength = 0;
  int opens = 0;
  double wall_seconds = 0.0;  // sequencing + routing only
  std::uint64_t seed = 0;
};

struct RouteOptions {
  Sequencer sequencer = Sequencer::GA;
  std::uint64_t seed = 0;
  GaParams ga;
  const PolicyCheckpoint* policy = nullptr;  // required for Attention
  PadStrategy pad = PadStrategy::PadEmpty;
};

struct RouteRun {
  RunReport report;
  RoutingInstance instance;
  RouteSolution solution;
};

// Exhaustive search over all orders; refuses more than kOracleMaxPairs pairs.
// Ties keep the lexicographically first order.
std::vector<int> oracle_order(const RoutingInstance& inst);
std::vector<int> random_order(const RoutingInstance& inst, std::uint64_t seed);

// Orders the pairs of an already built instance with the chosen sequencer.
std::vector<int> sequence_instance(const RoutingInstance& inst, const RouteOptions& opt);

// Runs the whole pipeline on one problem. For Attention the instance is
// padded to the checkpoint's n_max; a problem with more pairs is a DataError.
RouteRun run_route(const Problem& p, const RouteOptions& opt);
RunReport run_instance(const RoutingInstance& inst, const RouteOptions& opt, RouteSolution* solution = nullptr);

// ---- files ----------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file in the same directory, then renames it.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

Problem load_problem(const std::filesystem::path& path);

std::string report_csv_header();
std::string report_csv_row(const RunReport& r);

struct SolutionRow {
  int pair_index = 0;
  int net = 0;
  bool open = true;
  int wirelength = 0;
  std::vector<Vertex> corners;
};

// pair_index,net,status,wirelength,path with path as "x y;x y;..." corners.
std::string solution_csv(const RouteSolution& sol, const RoutingInstance& inst);
std::vector<SolutionRow> parse_solution_csv(std::string_view text);

// SVG 1.1 drawing: bars in black, one polyline per routed pair coloured by
// net, a red cross between the bars of every open pair.
std::string render_svg(const RoutingInstance& inst, const std::vector<SolutionRow>& rows);

// ---- datasets -------------------------------------------------------------

inline constexpr std::array<double, 3> kSplitRatios{0.6, 0.2, 0.2};

struct Dataset {
  std::filesystem::path dir;
  std::vector<std::string> train, val, test;  // file names
};

// Reads manifest.json written by cmd_gen.
Dataset load_dataset(const std::filesystem::path& dir);
std::vector<Problem> load_problems(const Dataset& ds, const std::vector<std::string>& files);
// Largest pair count over the given problems.
int max_pair_count(const std::vector<Problem>& problems);
std::vector<RoutingInstance> build_instances(const std::vector<Problem>& problems, int n_max, PadStrategy pad,
                                             std::uint64_t seed);

// ---- subcommands ----------------------------------------------------------

struct GenArgs {
  std::filesystem::path config;  // empty for defaults
  int count = 10;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;  // overrides the config seed
};
void cmd_gen(const GenArgs& args);

struct RouteArgs {
  std::filesystem::path problem;
  RouteOptions options;
  std::filesystem::path checkpoint;
  std::filesystem::path solution;  // optional outputs
  std::filesystem::path report;
  std::filesystem::path svg;
};
RunReport cmd_route(const RouteArgs& args);

struct TrainArgs {
  std::filesystem::path dataset;
  TrainHyper hyper;
  PadStrategy pad = PadStrategy::PadEmpty;
  std::filesystem::path checkpoint;
  std::filesystem::path curve;  // defaults to <checkpoint>.curve.csv
  bool quiet = false;
};
TrainResult cmd_train(const TrainArgs& args);
std::string curve_csv(const std::vector<EpochRecord>& curve);

struct CompareRow {
  std::string problem;
  int attention_cost = 0;
  double attention_seconds = 0.0;
  int ga_cost = 0;
  double ga_seconds = 0.0;
  double random_mean_cost = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;  // ascending GA cost
  double pearson = 0.0;
  double median_speedup = 0.0;
};

struct CompareArgs {
  std::filesystem::path dataset;
  std::filesystem::path checkpoint;
  std::string split = "test";
  int random_orders = 20;
  std::uint64_t seed = 0;
  GaParams ga;
  std::filesystem::path out;  // comparison CSV
};
CompareResult compare_instances(const std::vector<RoutingInstance>& instances, const PolicyCheckpoint& policy,
                                const CompareArgs& args);
CompareResult cmd_compare(const CompareArgs& args);
std::string compare_csv(const CompareResult& r);

struct ExportArgs {
  std::filesystem::path solution;
  std::filesystem::path problem;
  std::filesystem::path out;
};
std::string cmd_export_svg(const ExportArgs& args);

}  // namespace attnroute
