#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "errl/errors.hpp"
#include "errl/heuristics.hpp"
#include "errl/instance.hpp"
#include "errl/policy.hpp"
#include "errl/search.hpp"
#include "errl/solution.hpp"

using namespace errl;

namespace {

PolicyHyper tiny_hyper(ProblemKind kind) {
  PolicyHyper h;
  h.kind = kind;
  h.embed_dim = 16;
  h.num_layers = 2;
  h.num_heads = 2;
  h.ff_dim = 32;
  return h;
}

}  // namespace

TEST_CASE("width-1 beam search is bitwise identical to greedy decoding") {
  for (auto kind : {ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Mrpff}) {
    PolicyNet<float> net(tiny_hyper(kind));
    VecX<float> params = net.init_params(100 + static_cast<int>(kind));
    for (int s = 0; s < 40; ++s) {
      Instance inst = generate_instance(kind, 9, 7000 + s);
      auto enc = net.encode(inst, params, false);

      SearchConfig greedy;
      greedy.mode = SearchMode::Greedy;
      SearchConfig beam1;
      beam1.mode = SearchMode::Beam;
      beam1.beam_width = 1;

      Solution a = solve(net, inst, params, enc, greedy);
      Solution b = solve(net, inst, params, enc, beam1);
      CHECK(a.actions == b.actions);
      CHECK(a.total_length == b.total_length);  // bitwise, both from make_solution
    }
  }
}

TEST_CASE("best-of-K sampling is monotone in K over a shared pool") {
  PolicyNet<float> net(tiny_hyper(ProblemKind::Tsp));
  VecX<float> params = net.init_params(3);
  for (int s = 0; s < 50; ++s) {
    Instance inst = generate_instance(ProblemKind::Tsp, 10, 8000 + s);
    auto enc = net.encode(inst, params, false);

    double prev = std::numeric_limits<double>::infinity();
    for (int k : {1, 4, 16, 64}) {
      SearchConfig cfg;
      cfg.mode = SearchMode::Sample;
      cfg.sample_k = k;
      cfg.seed = 55;  // same seed -> pools are nested, so the best is non-increasing
      SearchMetrics metrics;
      Solution sol = solve(net, inst, params, enc, cfg, &metrics);
      CHECK(sol.feasible);
      CHECK(metrics.candidates == k);
      CHECK(sol.total_length <= prev + 1e-12);
      prev = sol.total_length;
    }
  }
}

TEST_CASE("64 samples beat one sample on nearly every instance") {
  PolicyNet<float> net(tiny_hyper(ProblemKind::Tsp));
  VecX<float> params = net.init_params(5);
  int wins = 0;
  const int kCount = 200;
  for (int s = 0; s < kCount; ++s) {
    Instance inst = generate_instance(ProblemKind::Tsp, 10, 9000 + s);
    auto enc = net.encode(inst, params, false);

    SearchConfig one;
    one.mode = SearchMode::Sample;
    one.sample_k = 1;
    one.seed = 1;  // independent pools: different seeds for the two modes
    SearchConfig many = one;
    many.sample_k = 64;
    many.seed = 2;

    const double single = solve(net, inst, params, enc, one).total_length;
    const double best64 = solve(net, inst, params, enc, many).total_length;
    if (best64 <= single + 1e-12) ++wins;
  }
  MESSAGE("best-of-64 <= single sample on ", wins, "/", kCount, " instances");
  CHECK(wins >= kCount * 95 / 100);
}

TEST_CASE("a beam covering every sequence recovers the exhaustive optimum") {
  PolicyNet<double> net(tiny_hyper(ProblemKind::Tsp));
  VecX<double> params = net.init_params(7);
  for (int s = 0; s < 10; ++s) {
    Instance inst = generate_instance(ProblemKind::Tsp, 5, 400 + s);
    auto enc = net.encode(inst, params, false);

    SearchConfig cfg;
    cfg.mode = SearchMode::Beam;
    cfg.beam_width = 120;  // >= 5! partial sequences, nothing is ever pruned
    Solution sol = solve(net, inst, params, enc, cfg);
    const double opt = exhaustive_tsp_optimum(inst).total_length;
    CHECK(sol.total_length == doctest::Approx(opt).epsilon(1e-12));
  }
}

TEST_CASE("beam search yields feasible solutions on all problem kinds") {
  for (auto kind : {ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Mrpff}) {
    PolicyNet<float> net(tiny_hyper(kind));
    VecX<float> params = net.init_params(200 + static_cast<int>(kind));
    for (int width : {2, 5, 10}) {
      for (int s = 0; s < 10; ++s) {
        Instance inst = generate_instance(kind, 8, 600 + s);
        SearchConfig cfg;
        cfg.mode = SearchMode::Beam;
        cfg.beam_width = width;
        SearchMetrics metrics;
        Solution sol = solve(net, inst, params, cfg, &metrics);
        CHECK(sol.feasible);
        CHECK(validate(inst, sol).violations.empty());
        CHECK(metrics.candidates > 0);
        CHECK(metrics.seconds >= 0.0);
      }
    }
  }
}

TEST_CASE("wider beams never do worse on the same instance") {
  PolicyNet<float> net(tiny_hyper(ProblemKind::Tsp));
  VecX<float> params = net.init_params(9);
  int improved = 0;
  for (int s = 0; s < 30; ++s) {
    Instance inst = generate_instance(ProblemKind::Tsp, 12, 11000 + s);
    auto enc = net.encode(inst, params, false);
    SearchConfig cfg;
    cfg.mode = SearchMode::Beam;
    cfg.beam_width = 1;
    const double w1 = solve(net, inst, params, enc, cfg).total_length;
    cfg.beam_width = 10;
    const double w10 = solve(net, inst, params, enc, cfg).total_length;
    // Beam scores rank by log-probability, not length, so no strict guarantee;
    // at width 10 the shortest-of-finished rule should still usually help.
    if (w10 < w1 - 1e-12) ++improved;
  }
  CHECK(improved > 10);
}

TEST_CASE("2-opt post-processing never lengthens the result") {
  for (auto kind : {ProblemKind::Tsp, ProblemKind::Cvrp}) {
    PolicyNet<float> net(tiny_hyper(kind));
    VecX<float> params = net.init_params(300 + static_cast<int>(kind));
    for (int s = 0; s < 40; ++s) {
      Instance inst = generate_instance(kind, 12, 12000 + s);
      auto enc = net.encode(inst, params, false);

      SearchConfig plain;
      plain.mode = SearchMode::Greedy;
      SearchConfig polished = plain;
      polished.post_2opt = true;

      Solution raw = solve(net, inst, params, enc, plain);
      Solution fixed = solve(net, inst, params, enc, polished);
      CHECK(fixed.total_length <= raw.total_length + 1e-9);
      CHECK(fixed.feasible);
    }
  }
}

TEST_CASE("gap evaluation matches hand-computed percentages") {
  CHECK(evaluate_gap({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
  CHECK(evaluate_gap({6.34}, {6.14}) == doctest::Approx(3.26).epsilon(0.01 / 3.26));
  CHECK(evaluate_gap({2.0, 4.0}, {1.0, 4.0}) == doctest::Approx(50.0).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_gap({1.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_gap({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_gap({1.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("gaps against an exhaustive reference are never negative") {
  std::vector<double> heuristic, reference;
  for (int s = 0; s < 40; ++s) {
    Instance inst = generate_instance(ProblemKind::Tsp, 8, 13000 + s);
    heuristic.push_back(nearest_insertion(inst).total_length);
    reference.push_back(exhaustive_tsp_optimum(inst).total_length);
    CHECK(evaluate_gap({heuristic.back()}, {reference.back()}) >= -1e-9);
  }
  CHECK(evaluate_gap(heuristic, reference) >= 0.0);
}

TEST_CASE("mode strings parse and print consistently") {
  SearchConfig g = SearchConfig::parse_mode("greedy");
  CHECK(g.mode == SearchMode::Greedy);
  CHECK(g.mode_name() == "greedy");

  SearchConfig s = SearchConfig::parse_mode("sample:16");
  CHECK(s.mode == SearchMode::Sample);
  CHECK(s.sample_k == 16);
  CHECK(s.mode_name() == "sample:16");

  SearchConfig b = SearchConfig::parse_mode("beam:7");
  CHECK(b.mode == SearchMode::Beam);
  CHECK(b.beam_width == 7);
  CHECK(b.mode_name() == "beam:7");

  CHECK_THROWS_AS(SearchConfig::parse_mode("magic"), UsageError);
  CHECK_THROWS_AS(SearchConfig::parse_mode("sample:"), UsageError);
  CHECK_THROWS_AS(SearchConfig::parse_mode("sample:abc"), UsageError);
  CHECK_THROWS_AS(SearchConfig::parse_mode("beam:0"), UsageError);
  CHECK_THROWS_AS(SearchConfig::parse_mode(""), UsageError);

  SearchConfig bad;
  bad.sample_k = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
