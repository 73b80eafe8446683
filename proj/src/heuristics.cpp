#include "errl/heuristics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "errl/errors.hpp"
#include "errl/rng.hpp"

namespace errl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_tsp(const Instance& inst, const char* op) {
  if (inst.kind != ProblemKind::Tsp)
    throw DataError(std::string(op) + " supports tsp instances only, got " + to_string(inst.kind));
}

// Cost of inserting `node` between consecutive tour positions (prev, next).
double insert_cost(const Matd& d, int prev, int next, int node) {
  return d(prev, node) + d(node, next) - d(prev, next);
}

// Cheapest-position insertion given a per-step node selection rule.
// `pick(d, in_tour, tour)` returns the next node to insert.
template <typename Pick>
Solution grow_by_insertion(const Instance& inst, Pick&& pick) {
  const int n = inst.num_nodes();
  const Matd d = distance_matrix(inst);
  std::vector<char> in_tour(n, 0);
  std::vector<int> tour;
  tour.reserve(n);
  for (int step = 0; step < n; ++step) {
    const int a = pick(d, in_tour, tour);
    in_tour[a] = 1;
    if (tour.empty()) {
      tour.push_back(a);
      continue;
    }
    const int m = static_cast<int>(tour.size());
    int best_pos = 0;
    double best = kInf;
    for (int j = 0; j < m; ++j) {
      const double c = insert_cost(d, tour[j], tour[(j + 1) % m], a);
      if (c < best) {
        best = c;
        best_pos = j;
      }
    }
    tour.insert(tour.begin() + best_pos + 1, a);
  }
  return make_solution(inst, std::move(tour));
}

// Distance from each out-of-tour node to its closest in-tour node.
// Used by both nearest (argmin) and farthest (argmax) selection.
int extremal_by_min_dist(const Matd& d, const std::vector<char>& in_tour, bool want_max) {
  const int n = static_cast<int>(d.rows());
  int best = -1;
  double best_val = want_max ? -kInf : kInf;
  for (int v = 0; v < n; ++v) {
    if (in_tour[v]) continue;
    double closest = kInf;
    for (int u = 0; u < n; ++u)
      if (in_tour[u]) closest = std::min(closest, d(v, u));
    if (want_max ? closest > best_val : closest < best_val) {
      best_val = closest;
      best = v;
    }
  }
  return best;
}

// One best-improvement sweep over a single route (fixed endpoints `head` and
// `tail`, -1 for a closed TSP tour). Returns the achieved improvement.
double two_opt_pass(const Matd& d, std::vector<int>& r, int head, int tail,
                    const TwoOptConfig& cfg) {
  const int m = static_cast<int>(r.size());
  const bool cyclic = head < 0;
  double total_gain = 0.0;
  double best_gain = 0.0;
  int best_i = -1, best_j = -1;
  for (int i = 0; i < m - 1; ++i) {
    // Reversing r[i..j] replaces edges (prev, r[i]) and (r[j], next).
    const int prev = i > 0 ? r[i - 1] : (cyclic ? r[m - 1] : head);
    for (int j = i + 1; j < m; ++j) {
      if (cyclic && i == 0 && j == m - 1) continue;  // same edge pair twice
      const int next = j < m - 1 ? r[j + 1] : (cyclic ? r[0] : tail);
      const double gain =
          d(prev, r[i]) + d(r[j], next) - d(prev, r[j]) - d(r[i], next);
      if (gain <= cfg.epsilon) continue;
      if (cfg.strategy == TwoOptStrategy::FirstImprovement) {
        std::reverse(r.begin() + i, r.begin() + j + 1);
        total_gain += gain;
        j = i;  // rescan j against the updated segment
      } else if (gain > best_gain) {
        best_gain = gain;
        best_i = i;
        best_j = j;
      }
    }
  }
  if (best_i >= 0) {
    std::reverse(r.begin() + best_i, r.begin() + best_j + 1);
    total_gain += best_gain;
  }
  return total_gain;
}

}  // namespace

Matd distance_matrix(const Instance& inst) {
  const int n = inst.num_nodes();
  Matd d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = inst.dist(i, j);
  }
  return d;
}

Solution nearest_neighbor(const Instance& inst) {
  require_tsp(inst, "nearest_neighbor");
  const int n = inst.num_nodes();
  const Matd d = distance_matrix(inst);
  std::vector<char> visited(n, 0);
  std::vector<int> tour{0};
  visited[0] = 1;
  while (static_cast<int>(tour.size()) < n) {
    const int cur = tour.back();
    int best = -1;
    double best_d = kInf;
    for (int v = 0; v < n; ++v)
      if (!visited[v] && d(cur, v) < best_d) {
        best_d = d(cur, v);
        best = v;
      }
    visited[best] = 1;
    tour.push_back(best);
  }
  return make_solution(inst, std::move(tour));
}

Solution nearest_insertion(const Instance& inst) {
  require_tsp(inst, "nearest_insertion");
  return grow_by_insertion(
      inst, [](const Matd& d, const std::vector<char>& in_tour, const std::vector<int>& tour) {
        if (tour.empty()) return 0;
        return extremal_by_min_dist(d, in_tour, /*want_max=*/false);
      });
}

Solution farthest_insertion(const Instance& inst) {
  require_tsp(inst, "farthest_insertion");
  return grow_by_insertion(
      inst, [](const Matd& d, const std::vector<char>& in_tour, const std::vector<int>& tour) {
        if (tour.empty()) {
          int seed_node = 0;
          d.rowwise().maxCoeff().maxCoeff(&seed_node);
          return seed_node;
        }
        return extremal_by_min_dist(d, in_tour, /*want_max=*/true);
      });
}

Solution random_insertion(const Instance& inst, std::uint64_t seed) {
  require_tsp(inst, "random_insertion");
  std::vector<int> order(inst.num_nodes());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(mix_seed(seed, 0x52494e53u));  // "RINS"
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t next = 0;
  return grow_by_insertion(inst,
                           [&order, &next](const Matd&, const std::vector<char>&,
                                           const std::vector<int>&) { return order[next++]; });
}

Solution two_opt(const Instance& inst, const Solution& sol, const TwoOptConfig& cfg) {
  if (!sol.feasible) throw std::invalid_argument("two_opt requires a feasible input solution");
  if (cfg.max_passes < 1 || cfg.epsilon < 0)
    throw std::invalid_argument("two_opt: max_passes >= 1 and epsilon >= 0 required");

  const Matd d = distance_matrix(inst);
  auto routes = sol.routes;
  for (auto& r : routes) {
    const int head = inst.has_depot() ? inst.depot : -1;
    for (int pass = 0; pass < cfg.max_passes; ++pass)
      if (two_opt_pass(d, r, head, head, cfg) <= cfg.epsilon) break;
  }

  std::vector<int> actions;
  actions.reserve(sol.actions.size());
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (k) actions.push_back(inst.depot);
    actions.insert(actions.end(), routes[k].begin(), routes[k].end());
  }
  return make_solution(inst, std::move(actions));
}

Solution exhaustive_tsp_optimum(const Instance& inst) {
  require_tsp(inst, "exhaustive_tsp_optimum");
  const int n = inst.num_nodes();
  if (n > 9) throw std::invalid_argument("exhaustive_tsp_optimum: limited to 9 nodes");
  std::vector<int> rest(n - 1);
  std::iota(rest.begin(), rest.end(), 1);
  std::vector<int> best_tour, tour(n);
  tour[0] = 0;
  double best = kInf;
  do {
    std::copy(rest.begin(), rest.end(), tour.begin() + 1);
    const double len = tour_length(inst, tour);
    if (len < best) {
      best = len;
      best_tour = tour;
    }
  } while (std::next_permutation(rest.begin(), rest.end()));
  return make_solution(inst, std::move(best_tour));
}

}  // namespace errl
