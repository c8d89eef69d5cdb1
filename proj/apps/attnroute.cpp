// Command-line front end: gen, route, train, compare, export-svg.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnroute/harness.hpp"

namespace {

using namespace attnroute;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

PadStrategy parse_pad(const std::string& s) { return s == "random" ? PadStrategy::PadRandom : PadStrategy::PadEmpty; }

void add_ga_flags(CLI::App* cmd, GaParams& ga) {
  cmd->add_option("--ga-generations", ga.generations, "GA generations")->check(CLI::PositiveNumber);
  cmd->add_option("--ga-population", ga.population, "GA population size")->check(CLI::PositiveNumber);
  cmd->add_option("--ga-elites", ga.elites, "GA elites kept per generation")->check(CLI::PositiveNumber);
  cmd->add_option("--ga-mutations", ga.mutations, "swap mutations per child")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track-assignment detailed router with attention and GA pair sequencing"};
  app.require_subcommand(1);

  GenArgs gen;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic problem set with a split manifest");
  gen_cmd->add_option("--config", gen.config, "generator config JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--count", gen.count, "number of problems")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "base seed (overrides the config)");

  RouteArgs route;
  std::string sequencer = "ga";
  auto* route_cmd = app.add_subcommand("route", "route one problem and report its cost");
  route_cmd->add_option("problem", route.problem, "problem JSON")->required()->check(CLI::ExistingFile);
  route_cmd->add_option("--sequencer", sequencer, "attention, ga, random or oracle")
      ->check(CLI::IsMember({"attention", "ga", "random", "oracle"}));
  route_cmd->add_option("--seed", route.options.seed, "random seed");
  route_cmd->add_option("--checkpoint", route.checkpoint, "trained policy (attention)");
  route_cmd->add_option("--solution", route.solution, "write the per-pair solution CSV");
  route_cmd->add_option("--report", route.report, "write the run report CSV");
  route_cmd->add_option("--svg", route.svg, "write an SVG drawing of the routes");
  add_ga_flags(route_cmd, route.options.ga);

  TrainArgs train;
  std::string train_pad = "empty";
  auto* train_cmd = app.add_subcommand("train", "train the attention policy on a generated dataset");
  train_cmd->add_option("dataset", train.dataset, "dataset directory (from gen)")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--epochs", train.hyper.epochs, "epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batches", train.hyper.batches, "batches per epoch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train.hyper.batch_size, "instances per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train.hyper.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--alpha", train.hyper.alpha, "baseline t-test significance")->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--pad", train_pad, "padding strategy")->check(CLI::IsMember({"empty", "random"}));
  train_cmd->add_option("--dim", train.hyper.dims.d, "embedding width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--heads", train.hyper.dims.heads, "attention heads")->check(CLI::PositiveNumber);
  train_cmd->add_option("--layers", train.hyper.dims.layers, "encoder layers")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--ff", train.hyper.dims.d_ff, "feed-forward width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.hyper.seed, "random seed");
  train_cmd->add_option("--checkpoint", train.checkpoint, "output checkpoint")->required();
  train_cmd->add_option("--curve", train.curve, "training curve CSV (default <checkpoint>.curve.csv)");
  train_cmd->add_flag("--quiet", train.quiet, "no per-epoch progress");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "compare attention, GA and random sequencing on a split");
  compare_cmd->add_option("dataset", compare.dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  compare_cmd->add_option("--checkpoint", compare.checkpoint, "trained policy")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--split", compare.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  compare_cmd->add_option("--seeds", compare.random_orders, "random orders per problem")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--seed", compare.seed, "random seed");
  compare_cmd->add_option("--out", compare.out, "comparison CSV")->required();
  add_ga_flags(compare_cmd, compare.ga);

  ExportArgs exp;
  auto* svg_cmd = app.add_subcommand("export-svg", "draw a routed solution");
  svg_cmd->add_option("solution", exp.solution, "solution CSV")->required()->check(CLI::ExistingFile);
  svg_cmd->add_option("problem", exp.problem, "problem JSON")->required()->check(CLI::ExistingFile);
  svg_cmd->add_option("--out", exp.out, "output SVG (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      if (*gen_seed_opt) gen.seed = gen_seed;
      cmd_gen(gen);
      std::cout << "wrote " << gen.count << " problems to " << gen.out_dir.string() << "\n";
    } else if (*route_cmd) {
      route.options.sequencer = parse_sequencer(sequencer);
      const RunReport r = cmd_route(route);
      std::cout << report_csv_header() << report_csv_row(r);
    } else if (*train_cmd) {
      train.pad = parse_pad(train_pad);
      const TrainResult r = cmd_train(train);
      std::cout << "best epoch " << r.best_epoch << ", validation cost " << r.best_val_cost << "\n";
    } else if (*compare_cmd) {
      const CompareResult r = cmd_compare(compare);
      std::cout << "problems " << r.rows.size() << ", pearson " << r.pearson << ", median speedup "
                << r.median_speedup << "\n";
    } else if (*svg_cmd) {
      const std::string svg = cmd_export_svg(exp);
      if (exp.out.empty()) std::cout << svg;
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ProblemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
