#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errl/types.hpp"

namespace errl {

enum class ProblemKind { Tsp, Cvrp, Mrpff };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& s);

// A routing problem instance. Immutable after construction; safe to share
// across threads. Coordinates live in the unit square. For CVRP/MRPFF the
// depot is node 0 and `n` in generate_instance counts customers only.
struct Instance {
  ProblemKind kind = ProblemKind::Tsp;
  Points nodes;            // num_nodes x 2
  int depot = 0;           // CVRP/MRPFF
  Veci demands;            // CVRP: per node, demands[depot] == 0
  int capacity = 0;        // CVRP
  int num_routes = 0;      // MRPFF: required route count K
  std::uint64_t seed = 0;  // generator seed that produced this instance

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  bool has_depot() const { return kind != ProblemKind::Tsp; }
  int num_customers() const { return has_depot() ? num_nodes() - 1 : num_nodes(); }

  double dist(int i, int j) const { return (nodes.row(i) - nodes.row(j)).norm(); }
};

struct GeneratorOptions {
  int capacity = 0;    // 0: pick by size (30/40/50 for n <= 20/50/beyond)
  int num_routes = 2;  // MRPFF fleet size K
};

// Default CVRP vehicle capacity for an instance with `n` customers.
int default_capacity(int n);

// Coordinates i.i.d. uniform on [0,1]^2, CVRP demands uniform on {1..9}.
// Deterministic in (kind, n, seed). `n` counts customers for CVRP/MRPFF.
Instance generate_instance(ProblemKind kind, int n, std::uint64_t seed,
                           const GeneratorOptions& opts = {});

// Throws std::invalid_argument when a structural invariant is broken
// (coordinates outside the unit square, bad demands, capacity <= max demand).
void check_instance(const Instance& inst);

}  // namespace errl
