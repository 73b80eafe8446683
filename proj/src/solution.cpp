#include "errl/solution.hpp"

#include <algorithm>
#include <stdexcept>

namespace errl {

std::vector<std::vector<int>> decompose_routes(const Instance& inst,
                                               const std::vector<int>& actions) {
  std::vector<std::vector<int>> routes;
  if (inst.kind == ProblemKind::Tsp) {
    routes.push_back(actions);
    return routes;
  }
  std::vector<int> current;
  for (int a : actions) {
    if (a == inst.depot) {
      routes.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(a);
    }
  }
  routes.push_back(std::move(current));
  return routes;
}

double tour_length(const Instance& inst, const std::vector<int>& actions) {
  const int n = inst.num_nodes();
  for (int a : actions)
    if (a < 0 || a >= n) throw std::out_of_range("action indexes a node outside the instance");

  if (inst.kind == ProblemKind::Tsp) {
    if (actions.empty()) return 0.0;
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < actions.size(); ++i)
      len += inst.dist(actions[i], actions[i + 1]);
    len += inst.dist(actions.back(), actions.front());
    return len;
  }

  double len = 0.0;
  for (const auto& route : decompose_routes(inst, actions)) {
    if (route.empty()) continue;
    len += inst.dist(inst.depot, route.front());
    for (std::size_t i = 0; i + 1 < route.size(); ++i)
      len += inst.dist(route[i], route[i + 1]);
    len += inst.dist(route.back(), inst.depot);
  }
  return len;
}

double tour_length(const Instance& inst, const Solution& sol) {
  return tour_length(inst, sol.actions);
}

ValidationReport validate(const Instance& inst, const Solution& sol) {
  ValidationReport report;
  auto flag = [&report](std::string msg) {
    report.feasible = false;
    report.violations.push_back(std::move(msg));
  };

  const int n = inst.num_nodes();
  for (int a : sol.actions)
    if (a < 0 || a >= n) {
      flag("action " + std::to_string(a) + " out of range");
      return report;
    }

  std::vector<int> visits(n, 0);
  for (const auto& route : sol.routes)
    for (int c : route) ++visits[c];

  if (inst.kind == ProblemKind::Tsp) {
    for (int i = 0; i < n; ++i)
      if (visits[i] != 1)
        flag("node " + std::to_string(i) + " visited " + std::to_string(visits[i]) + " times");
    return report;
  }

  if (visits[inst.depot] != 0) flag("depot appears inside a route");
  for (int i = 0; i < n; ++i) {
    if (i == inst.depot) continue;
    if (visits[i] != 1)
      flag("customer " + std::to_string(i) + " visited " + std::to_string(visits[i]) + " times");
  }

  for (std::size_t r = 0; r < sol.routes.size(); ++r) {
    if (sol.routes[r].empty()) {
      flag("route " + std::to_string(r) + " is empty");
      continue;
    }
    if (inst.kind == ProblemKind::Cvrp) {
      long load = 0;
      for (int c : sol.routes[r]) load += inst.demands[c];
      if (load > inst.capacity)
        flag("route " + std::to_string(r) + " load " + std::to_string(load) +
             " exceeds capacity " + std::to_string(inst.capacity));
    }
  }

  if (inst.kind == ProblemKind::Mrpff &&
      static_cast<int>(sol.routes.size()) != inst.num_routes)
    flag("expected " + std::to_string(inst.num_routes) + " routes, got " +
         std::to_string(sol.routes.size()));

  return report;
}

Solution make_solution(const Instance& inst, std::vector<int> actions) {
  Solution sol;
  sol.actions = std::move(actions);
  sol.routes = decompose_routes(inst, sol.actions);
  sol.total_length = tour_length(inst, sol.actions);
  sol.feasible = validate(inst, sol).feasible;
  return sol;
}

}  // namespace errl
