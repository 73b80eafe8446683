#include "errl/instance.hpp"

#include <stdexcept>

#include "errl/rng.hpp"

namespace errl {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Tsp: return "tsp";
    case ProblemKind::Cvrp: return "cvrp";
    case ProblemKind::Mrpff: return "mrpff";
  }
  return "?";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "tsp") return ProblemKind::Tsp;
  if (s == "cvrp") return ProblemKind::Cvrp;
  if (s == "mrpff") return ProblemKind::Mrpff;
  throw std::invalid_argument("unknown problem kind: " + s);
}

int default_capacity(int n) {
  if (n <= 20) return 30;
  if (n <= 50) return 40;
  return 50;
}

Instance generate_instance(ProblemKind kind, int n, std::uint64_t seed,
                           const GeneratorOptions& opts) {
  if (n < 2) throw std::invalid_argument("instance size must be at least 2");

  Instance inst;
  inst.kind = kind;
  inst.seed = seed;

  const bool depot = kind != ProblemKind::Tsp;
  const int total = depot ? n + 1 : n;
  inst.nodes.resize(total, 2);

  Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(kind), n));
  for (int i = 0; i < total; ++i) {
    inst.nodes(i, 0) = uniform01(rng);
    inst.nodes(i, 1) = uniform01(rng);
  }

  if (kind == ProblemKind::Cvrp) {
    inst.capacity = opts.capacity > 0 ? opts.capacity : default_capacity(n);
    inst.demands.setZero(total);
    for (int i = 1; i < total; ++i) inst.demands[i] = uniform_int(rng, 1, 9);
  } else if (kind == ProblemKind::Mrpff) {
    inst.num_routes = opts.num_routes;
  }

  check_instance(inst);
  return inst;
}

void check_instance(const Instance& inst) {
  const int total = inst.num_nodes();
  if (total < 2) throw std::invalid_argument("instance has fewer than 2 nodes");
  if ((inst.nodes.array() < 0.0).any() || (inst.nodes.array() > 1.0).any())
    throw std::invalid_argument("coordinates must lie in the unit square");

  switch (inst.kind) {
    case ProblemKind::Tsp:
      if (inst.demands.size() != 0 || inst.capacity != 0)
        throw std::invalid_argument("TSP instance must not carry demands or capacity");
      break;
    case ProblemKind::Cvrp: {
      if (inst.depot != 0) throw std::invalid_argument("depot must be node 0");
      if (inst.demands.size() != total)
        throw std::invalid_argument("CVRP instance needs one demand per node");
      if (inst.demands[inst.depot] != 0)
        throw std::invalid_argument("depot demand must be 0");
      for (int i = 1; i < total; ++i)
        if (inst.demands[i] < 1 || inst.demands[i] > 9)
          throw std::invalid_argument("customer demands must lie in {1..9}");
      if (inst.capacity <= inst.demands.maxCoeff())
        throw std::invalid_argument("capacity must exceed the largest demand");
      break;
    }
    case ProblemKind::Mrpff:
      if (inst.depot != 0) throw std::invalid_argument("depot must be node 0");
      if (inst.demands.size() != 0)
        throw std::invalid_argument("MRPFF instance must not carry demands");
      if (inst.num_routes < 2)
        throw std::invalid_argument("MRPFF needs at least 2 routes");
      if (inst.num_customers() < inst.num_routes)
        throw std::invalid_argument("MRPFF needs at least one customer per route");
      break;
  }
}

}  // namespace errl
