#pragma once

#include <cstdint>

#include "errl/solution.hpp"

namespace errl {

enum class TwoOptStrategy { BestImprovement, FirstImprovement };

struct TwoOptConfig {
  int max_passes = 1000;
  TwoOptStrategy strategy = TwoOptStrategy::BestImprovement;
  double epsilon = 1e-10;  // minimum accepted improvement, length units
};

// Full pairwise Euclidean distance matrix.
Matd distance_matrix(const Instance& inst);

// Classical TSP construction heuristics. All insertion variants grow the tour
// by cheapest-position insertion and differ only in which node they add next:
// nearest = closest to the tour, farthest = node whose closest tour node is
// farthest, random = seeded random order. Non-TSP instances are rejected.
Solution nearest_neighbor(const Instance& inst);
Solution nearest_insertion(const Instance& inst);
Solution random_insertion(const Instance& inst, std::uint64_t seed);
Solution farthest_insertion(const Instance& inst);

// 2-opt local search: repeatedly replaces two edges by the uncrossed pair
// while that shortens the tour. Multi-route solutions are improved within
// each route only, so feasibility (capacity, route count) is preserved.
// Stops after `max_passes` sweeps or a sweep improving by <= epsilon.
Solution two_opt(const Instance& inst, const Solution& sol, const TwoOptConfig& cfg = {});

// Exact optimum by permutation enumeration with node 0 fixed. TSP only,
// num_nodes <= 9 (enforced).
Solution exhaustive_tsp_optimum(const Instance& inst);

}  // namespace errl
