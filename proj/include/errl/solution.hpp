#pragma once

#include <string>
#include <vector>

#include "errl/instance.hpp"

namespace errl {

// An ordered action sequence (node indices, with mid-sequence depot returns
// for CVRP/MRPFF) plus its derived route decomposition and Euclidean length.
// Immutable after make_solution.
struct Solution {
  std::vector<int> actions;
  std::vector<std::vector<int>> routes;  // customer sequences, depot implied at both ends
  double total_length = 0.0;
  bool feasible = false;
};

struct ValidationReport {
  bool feasible = true;
  std::vector<std::string> violations;
};

// Splits `actions` on depot tokens (TSP: the whole tour is one route).
std::vector<std::vector<int>> decompose_routes(const Instance& inst,
                                               const std::vector<int>& actions);

// Exact Euclidean length: cycle closure for TSP, depot-to-depot closure per
// route otherwise. Throws std::out_of_range for indices outside the instance.
double tour_length(const Instance& inst, const std::vector<int>& actions);
double tour_length(const Instance& inst, const Solution& sol);

// Checks visit-exactly-once, per-route capacity, route count (MRPFF) and
// route structure. Violations are reported, never thrown.
//
// Capacity is checked per route rather than via subset ("capacity cut")
// inequalities: for solutions built as depot-to-depot walks the routes are
// connected by construction, and the per-route load bound is then equivalent
// to the subset form.
ValidationReport validate(const Instance& inst, const Solution& sol);

// Builds a Solution with derived routes, length and feasibility flag.
Solution make_solution(const Instance& inst, std::vector<int> actions);

}  // namespace errl
