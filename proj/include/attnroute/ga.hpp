#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "attnroute/pattern_route.hpp"
#include "attnroute/rng.hpp"

namespace attnroute {

struct Chromosome {
  std::vector<int> order;
};

struct GaParams {
  int generations = 10;
  int population = 10;
  int elites = 4;
  int mutations = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Memoized -cost lookups for one instance.
class FitnessCache {
 public:
  explicit FitnessCache(const RoutingInstance& inst) : inst_(&inst) {}
  double fitness(const Chromosome& c);
  int cost(const std::vector<int>& order);
  std::size_t evaluations() const { return evaluations_; }

 private:
  const RoutingInstance* inst_;
  std::map<std::vector<int>, int> memo_;
  std::size_t evaluations_ = 0;
};

double fitness(const Chromosome& c, const RoutingInstance& inst);

// Partially matched crossover: child keeps pa[cut_lo, cut_hi) and takes the
// remaining genes from pb, resolving clashes through the segment mapping.
Chromosome pmx_crossover(const Chromosome& pa, const Chromosome& pb, int cut_lo, int cut_hi);
Chromosome pmx_crossover(const Chromosome& pa, const Chromosome& pb, Rng& rng);

Chromosome swap_positions(Chromosome c, int i, int j);
Chromosome swap_mutation(Chromosome c, Rng& rng, int count);

struct GaResult {
  std::vector<int> best_order;
  int best_cost = 0;
  std::vector<int> history;  // best-ever cost after each evaluated generation
  std::size_t evaluations = 0;
};

GaResult ga_sequence(const RoutingInstance& inst, const GaParams& params);

}  // namespace attnroute
