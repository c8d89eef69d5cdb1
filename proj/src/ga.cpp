#include "attnroute/ga.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace attnroute {

void GaParams::validate() const {
  if (generations < 1 || population < 1 || elites < 1 || mutations < 0)
    throw std::invalid_argument("GA parameters must be positive");
  if (elites > population) throw std::invalid_argument("GA elites must not exceed population");
}

int FitnessCache::cost(const std::vector<int>& order) {
  auto it = memo_.find(order);
  if (it != memo_.end()) return it->second;
  ++evaluations_;
  const int c = route_cost(*inst_, order);
  memo_.emplace(order, c);
  return c;
}

double FitnessCache::fitness(const Chromosome& c) { return -static_cast<double>(cost(c.order)); }

double fitness(const Chromosome& c, const RoutingInstance& inst) {
  return -static_cast<double>(route_cost(inst, c.order));
}

Chromosome pmx_crossover(const Chromosome& pa, const Chromosome& pb, int cut_lo, int cut_hi) {
  const auto n = pa.order.size();
  if (pb.order.size() != n) throw std::invalid_argument("PMX parents differ in length");
  if (cut_lo < 0 || cut_hi > static_cast<int>(n) || cut_lo >= cut_hi) throw std::invalid_argument("PMX cut points invalid");
  const auto lo = static_cast<std::size_t>(cut_lo);
  const auto hi = static_cast<std::size_t>(cut_hi);

  // Genes are indices in [0, n); position lookups make each chain step O(1).
  int max_gene = 0;
  for (int g : pa.order) max_gene = std::max(max_gene, g);
  std::vector<int> pos_in_pa(static_cast<std::size_t>(max_gene) + 1, -1);
  for (std::size_t i = 0; i < n; ++i) pos_in_pa[static_cast<std::size_t>(pa.order[i])] = static_cast<int>(i);
  auto in_segment = [&](int gene) {
    if (gene < 0 || gene > max_gene) return false;
    const int p = pos_in_pa[static_cast<std::size_t>(gene)];
    return p >= cut_lo && p < cut_hi;
  };

  Chromosome child;
  child.order.assign(n, -1);
  for (std::size_t i = lo; i < hi; ++i) child.order[i] = pa.order[i];
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= lo && i < hi) continue;
    int gene = pb.order[i];
    // Follow pa[k] -> pb[k] until the gene is not already in the copied segment.
    while (in_segment(gene)) gene = pb.order[static_cast<std::size_t>(pos_in_pa[static_cast<std::size_t>(gene)])];
    child.order[i] = gene;
  }
  return child;
}

Chromosome pmx_crossover(const Chromosome& pa, const Chromosome& pb, Rng& rng) {
  const auto n = static_cast<std::int64_t>(pa.order.size());
  if (n == 0) return pa;
  const auto a = rng.uniform_int(0, n);
  auto b = rng.uniform_int(0, n - 1);
  if (b >= a) ++b;
  return pmx_crossover(pa, pb, static_cast<int>(std::min(a, b)), static_cast<int>(std::max(a, b)));
}

Chromosome swap_positions(Chromosome c, int i, int j) {
  std::swap(c.order.at(static_cast<std::size_t>(i)), c.order.at(static_cast<std::size_t>(j)));
  return c;
}

Chromosome swap_mutation(Chromosome c, Rng& rng, int count) {
  const auto n = static_cast<std::int64_t>(c.order.size());
  if (n < 2) return c;
  for (int k = 0; k < count; ++k) {
    const auto i = rng.uniform_int(0, n - 1);
    auto j = rng.uniform_int(0, n - 2);
    if (j >= i) ++j;
    c = swap_positions(std::move(c), static_cast<int>(i), static_cast<int>(j));
  }
  return c;
}

GaResult ga_sequence(const RoutingInstance& inst, const GaParams& params) {
  params.validate();
  const int n = inst.real_count();
  if (n < 1) throw std::invalid_argument("GA sequencing needs at least one pair");

  Rng rng(params.seed);
  FitnessCache cache(inst);
  std::vector<Chromosome> pop;
  for (int i = 0; i < params.population; ++i) pop.push_back({rng.permutation(n)});

  GaResult res;
  bool have_best = false;
  auto evaluate = [&](const std::vector<Chromosome>& generation) {
    std::vector<int> costs;
    for (const auto& c : generation) {
      costs.push_back(cache.cost(c.order));
      if (!have_best || costs.back() < res.best_cost) {
        res.best_cost = costs.back();
        res.best_order = c.order;
        have_best = true;
      }
    }
    res.history.push_back(res.best_cost);
    return costs;
  };

  for (int gen = 0; gen < params.generations; ++gen) {
    const auto costs = evaluate(pop);
    std::vector<std::size_t> rank(pop.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
    std::vector<Chromosome> elites;
    for (int e = 0; e < params.elites; ++e) elites.push_back(pop[rank[static_cast<std::size_t>(e)]]);

    // The new generation replaces the old one entirely.
    std::vector<Chromosome> next;
    const auto q = static_cast<std::int64_t>(elites.size());
    for (int i = 0; i < params.population; ++i) {
      const auto a = rng.uniform_int(0, q - 1);
      auto b = a;
      if (q > 1) {
        b = rng.uniform_int(0, q - 2);
        if (b >= a) ++b;
      }
      auto child = pmx_crossover(elites[static_cast<std::size_t>(a)], elites[static_cast<std::size_t>(b)], rng);
      next.push_back(swap_mutation(std::move(child), rng, params.mutations));
    }
    pop = std::move(next);
  }
  evaluate(pop);
  res.evaluations = cache.evaluations();
  return res;
}

}  // namespace attnroute
