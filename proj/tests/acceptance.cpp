// Acceptance gate. `acceptance <N>` exercises one numbered criterion,
// prints exactly one PASS/FAIL line on stdout and exits 0 (pass) / 1 (fail).
// Stage progress goes to stderr. The two long training criteria (3 and 4)
// keep their runs under $ERRL_ACCEPT_CACHE (default "acceptance_cache"):
// interrupted runs resume from the stored checkpoint and finished runs are
// revalidated from the stored metrics without retraining.

#include <algorithm>
#include <cinttypes>
#include <cstdarg>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errl/heuristics.hpp"
#include "errl/instance.hpp"
#include "errl/policy.hpp"
#include "errl/rng.hpp"
#include "errl/search.hpp"
#include "errl/solution.hpp"
#include "errl/training.hpp"

using namespace errl;

namespace {

namespace fs = std::filesystem;

std::string cache_dir() {
  const char* env = std::getenv("ERRL_ACCEPT_CACHE");
  return env && *env ? env : "acceptance_cache";
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

void note(const std::string& msg) {
  std::fprintf(stderr, "%s\n", msg.c_str());
  std::fflush(stderr);
}

// epoch -> validation mean length, deduplicated (a rerun of an interrupted
// epoch overwrites the stale row).
std::map<int, double> read_val_curve(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) return {};
  std::map<int, double> curve;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) continue;
    curve[std::stoi(line.substr(0, c1))] = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
  }
  return curve;
}

// Train `cfg` into cfg.out_dir, resuming a partial run and skipping a
// finished one. Returns the per-epoch validation curve.
std::map<int, double> ensure_trained(const TrainConfig& cfg) {
  const std::string ck_path = cfg.out_dir + "/checkpoint.json";
  int done = 0;
  if (fs::exists(ck_path)) done = load_checkpoint(ck_path).epochs_done;
  if (done < cfg.epochs) {
    note(fmt("  training %s: epoch %d -> %d", cfg.out_dir.c_str(), done, cfg.epochs));
    train(cfg, done > 0 ? ck_path : "");
  } else {
    note(fmt("  cached %s: %d epochs", cfg.out_dir.c_str(), done));
  }
  auto curve = read_val_curve(cfg.out_dir + "/metrics.csv");
  if (static_cast<int>(curve.size()) < cfg.epochs || curve.count(cfg.epochs) == 0)
    throw DataError("incomplete metrics in " + cfg.out_dir);
  return curve;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- criterion 1

bool criterion1(std::string& detail) {
  const double tol = 1e-9;
  int violations = 0, n5_hits = 0, n5_total = 0;
  long solutions = 0;
  for (int i = 0; i < 200; ++i) {
    const int n = 5 + i / 50;  // 50 instances each of n = 5, 6, 7, 8
    const Instance inst = generate_instance(ProblemKind::Tsp, n, 1000 + i);
    const double opt = exhaustive_tsp_optimum(inst).total_length;

    const Solution constructed[] = {nearest_neighbor(inst), nearest_insertion(inst),
                                    random_insertion(inst, i), farthest_insertion(inst)};
    for (const Solution& sol : constructed) {
      const Solution improved = two_opt(inst, sol);
      for (const Solution* s : {&sol, &improved}) {
        ++solutions;
        if (s->total_length < opt - tol) ++violations;
      }
    }
    if (n == 5) {
      ++n5_total;
      const Solution greedy2opt = two_opt(inst, nearest_neighbor(inst));
      if (greedy2opt.total_length <= opt + tol) ++n5_hits;
    }
  }
  detail = fmt("%d lower-bound violations over %ld solutions vs exhaustive optimum; "
               "greedy+2opt optimal on %d/%d n=5 instances (need >= %d)",
               violations, solutions, n5_hits, n5_total, (n5_total * 60 + 99) / 100);
  return violations == 0 && n5_hits * 100 >= n5_total * 60;
}

// ---------------------------------------------------------------- criterion 2

bool criterion2(std::string& detail) {
  std::vector<double> nearest, random_, farthest;
  for (int i = 0; i < 1000; ++i) {
    const Instance inst = generate_instance(ProblemKind::Tsp, 20, 4000 + i);
    nearest.push_back(nearest_insertion(inst).total_length);
    random_.push_back(random_insertion(inst, i).total_length);
    farthest.push_back(farthest_insertion(inst).total_length);
  }
  const double mn = mean(nearest), mr = mean(random_), mf = mean(farthest);
  detail = fmt("1000 TSP20 means: nearest insertion %.4f (4.33+-0.05), "
               "random %.4f (4.00+-0.05), farthest %.4f (3.92+-0.05)",
               mn, mr, mf);
  return std::abs(mn - 4.33) <= 0.05 && std::abs(mr - 4.00) <= 0.05 &&
         std::abs(mf - 3.92) <= 0.05;
}

// ---------------------------------------------------------------- criterion 3

TrainConfig desk_profile() {
  TrainConfig cfg;
  cfg.kind = ProblemKind::Tsp;
  cfg.n = 20;
  cfg.hyper.embed_dim = 64;
  cfg.hyper.num_layers = 2;
  cfg.hyper.num_heads = 8;
  cfg.hyper.ff_dim = 256;
  cfg.trainer = TrainerKind::Errl1;
  cfg.baseline = BaselineKind::SharedMean;
  cfg.alpha = 0.3;
  cfg.lr = 1e-4;
  cfg.batch_size = 64;
  cfg.traj_per_instance = 8;
  cfg.epochs = 200;
  cfg.steps_per_epoch = 100;
  cfg.val_size = 1000;
  cfg.seed = 2024;
  cfg.precision = Precision::Float32;
  return cfg;
}

bool criterion3(std::string& detail) {
  TrainConfig cfg = desk_profile();
  cfg.out_dir = cache_dir() + "/criterion3";
  const auto curve = ensure_trained(cfg);
  const double final_val = curve.at(cfg.epochs);
  detail = fmt("TSP20 desk training (embed 64, 2 layers, B=64, N=8, alpha 0.3, lr 1e-4, "
               "200x100 steps): greedy validation mean %.4f over %d instances (need <= 4.10)",
               final_val, cfg.val_size);
  return final_val <= 4.10;
}

// ---------------------------------------------------------------- criterion 4

// Reduced profile for the paired-seed entropy ablation: small enough that six
// runs finish quickly, large enough that both arms can cross the 4.30 mark.
TrainConfig ablation_profile(std::uint64_t seed, double alpha) {
  TrainConfig cfg;
  cfg.kind = ProblemKind::Tsp;
  cfg.n = 20;
  cfg.hyper.embed_dim = 32;
  cfg.hyper.num_layers = 1;
  cfg.hyper.num_heads = 4;
  cfg.hyper.ff_dim = 64;
  cfg.trainer = TrainerKind::Errl1;
  cfg.baseline = BaselineKind::SharedMean;
  cfg.alpha = alpha;
  cfg.lr = 3e-4;
  cfg.batch_size = 32;
  cfg.traj_per_instance = 8;
  cfg.epochs = 40;
  cfg.steps_per_epoch = 50;
  cfg.val_size = 500;
  cfg.seed = seed;
  cfg.precision = Precision::Float32;
  return cfg;
}

int first_epoch_reaching(const std::map<int, double>& curve, double threshold) {
  for (const auto& [epoch, val] : curve)
    if (val <= threshold) return epoch;
  return INT_MAX;
}

bool criterion4(std::string& detail) {
  const double threshold = 4.30;
  const std::uint64_t seeds[] = {101, 102, 103};
  int reach_wins = 0, final_wins = 0;
  std::string per_pair;
  for (std::uint64_t seed : seeds) {
    std::map<double, std::map<int, double>> curves;
    for (double alpha : {0.0, 0.3}) {
      TrainConfig cfg = ablation_profile(seed, alpha);
      cfg.out_dir = cache_dir() + fmt("/criterion4_seed%" PRIu64 "_alpha%s", seed,
                                      alpha == 0.0 ? "0" : "03");
      curves[alpha] = ensure_trained(cfg);
    }
    const int reach0 = first_epoch_reaching(curves[0.0], threshold);
    const int reach3 = first_epoch_reaching(curves[0.3], threshold);
    const double final0 = curves[0.0].rbegin()->second;
    const double final3 = curves[0.3].rbegin()->second;
    if (reach3 <= reach0) ++reach_wins;
    if (final3 <= final0) ++final_wins;
    per_pair += fmt(" [seed %" PRIu64 ": reach %s vs %s, final %.3f vs %.3f]", seed,
                    reach3 == INT_MAX ? "never" : fmt("%d", reach3).c_str(),
                    reach0 == INT_MAX ? "never" : fmt("%d", reach0).c_str(), final3, final0);
  }
  detail = fmt("entropy ablation, 3 paired seeds, alpha 0.3 vs 0: reaches 4.30 no later in "
               "%d/3, final length <= in %d/3 (need >= 2/3 for both);%s",
               reach_wins, final_wins, per_pair.c_str());
  return reach_wins >= 2 && final_wins >= 2;
}

// ---------------------------------------------------------------- criterion 5

bool criterion5(std::string& detail) {
  PolicyHyper hyper;
  hyper.kind = ProblemKind::Tsp;
  hyper.embed_dim = 8;
  hyper.num_layers = 1;
  hyper.num_heads = 2;
  hyper.ff_dim = 16;
  const PolicyNet<double> net(hyper);
  const Instance inst = generate_instance(ProblemKind::Tsp, 5, 17);
  const Vecd base = net.init_params(3);

  double worst = 0.0;
  for (double alpha : {0.0, 0.3}) {
    // One fixed sampled trajectory; the objective is its log-probability plus
    // alpha times its summed per-step entropy.
    Rng rng = make_rng(mix_seed(5, alpha == 0.0 ? 1 : 2));
    DecodeTape<double> tape;
    const Encoded<double> enc = net.encode(inst, base, /*with_tape=*/true);
    const Trajectory traj = net.rollout(inst, base, enc, DecodeMode::Sample, &rng, &tape);

    Vecd grad = Vecd::Zero(net.num_params());
    net.accumulate_gradient(inst, base, enc, {{&tape, 1.0, alpha}}, 0.0, grad);

    const auto objective = [&](const Vecd& p) {
      const Encoded<double> e = net.encode(inst, p, /*with_tape=*/false);
      const auto [logp, ent] = net.score(inst, p, e, traj.solution.actions);
      return logp + alpha * ent;
    };
    // Coordinates with derivatives near 1e-8 sit below the roundoff floor of
    // a single small step, so each coordinate may escalate through a ladder
    // of step sizes and keeps its best agreement: a wrong gradient disagrees
    // at every scale, roundoff clears at a larger one.
    Vecd probe = base;
    for (int k = 0; k < net.layout().critic_W1; ++k) {
      double best_rel = 1e300;
      for (double eps : {1e-5, 1e-4, 1e-3}) {
        probe[k] = base[k] + eps;
        const double f_plus = objective(probe);
        probe[k] = base[k] - eps;
        const double f_minus = objective(probe);
        probe[k] = base[k];
        const double fd = (f_plus - f_minus) / (2 * eps);
        best_rel = std::min(best_rel,
                            std::abs(grad[k] - fd) / (std::abs(grad[k]) + std::abs(fd) + 1e-8));
        if (best_rel < 1e-4) break;
      }
      worst = std::max(worst, best_rel);
    }
  }
  detail = fmt("analytic vs central-difference gradient of logp + alpha*entropy, "
               "all %d policy coordinates, alpha in {0, 0.3}: worst relative error %.2e "
               "(need < 1e-4)",
               net.layout().critic_W1, worst);
  return worst < 1e-4;
}

// ---------------------------------------------------------------- criterion 6

bool criterion6(std::string& detail) {
  PolicyHyper hyper;
  hyper.kind = ProblemKind::Tsp;
  hyper.embed_dim = 8;
  hyper.num_layers = 1;
  hyper.num_heads = 2;
  hyper.ff_dim = 16;
  const PolicyNet<double> net(hyper);
  const Instance inst = generate_instance(ProblemKind::Tsp, 5, 60);
  const Vecd params = net.init_params(7);
  const Encoded<double> enc = net.encode(inst, params, /*with_tape=*/true);
  const int n = inst.num_nodes();

  // 20 distinct random policy coordinates (the critic head gets no gradient
  // from this estimator and is excluded).
  Rng pick = make_rng(mix_seed(66, 1));
  std::set<int> coord_set;
  while (coord_set.size() < 20)
    coord_set.insert(uniform_int(pick, 0, net.layout().critic_W1 - 1));
  const std::vector<int> coords(coord_set.begin(), coord_set.end());

  const int num_traj = 8;
  const int calls = 12500;  // x8 trajectories = 1e5 sampled trajectories
  double worst_sigmas = 0.0;
  for (double alpha : {0.0, 0.3}) {
    // Exact gradient of E[R] + (alpha/T) E[H] by enumerating all 120 tours:
    // sum_tau P(tau) [R(tau) dlogP(tau) + (alpha/T) dH(tau)].
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<DecodeTape<double>> tapes;
    std::vector<TrajectoryGrad<double>> weights;
    tapes.reserve(120);
    do {
      tapes.emplace_back();
      const auto [logp, ent] = net.score(inst, params, enc, perm, &tapes.back());
      (void)ent;
      const double prob = std::exp(logp);
      const double reward = -tour_length(inst, perm);
      weights.push_back({&tapes.back(), prob * reward, prob * alpha / n});
    } while (std::next_permutation(perm.begin(), perm.end()));
    Vecd exact = Vecd::Zero(net.num_params());
    net.accumulate_gradient(inst, params, enc, weights, 0.0, exact);

    // Monte-Carlo estimates from the shipped estimator (leave-one-out shared
    // baseline, 8 trajectories per call). Welford statistics per coordinate.
    Rng rng = make_rng(mix_seed(66, alpha == 0.0 ? 2 : 3));
    Vecd g(net.num_params());
    std::vector<double> mc_mean(coords.size(), 0.0), mc_m2(coords.size(), 0.0);
    for (int k = 1; k <= calls; ++k) {
      g.setZero();
      errl1_instance_gradient(net, inst, params, enc, num_traj, alpha,
                              BaselineKind::SharedMean, false, rng, g);
      for (std::size_t c = 0; c < coords.size(); ++c) {
        const double x = g[coords[c]];
        const double delta = x - mc_mean[c];
        mc_mean[c] += delta / k;
        mc_m2[c] += delta * (x - mc_mean[c]);
      }
    }
    for (std::size_t c = 0; c < coords.size(); ++c) {
      const double se = std::sqrt(mc_m2[c] / (calls - 1) / calls);
      const double sigmas = std::abs(mc_mean[c] - exact[coords[c]]) / (se + 1e-15);
      worst_sigmas = std::max(worst_sigmas, sigmas);
    }
    note(fmt("  alpha %.1f: worst |MC - exact| so far %.2f standard errors", alpha,
             worst_sigmas));
  }
  detail = fmt("TSP5 enumeration-exact gradient vs 1e5-sample estimator mean, 20 random "
               "coordinates, alpha in {0, 0.3}: worst deviation %.2f standard errors "
               "(need <= 3)",
               worst_sigmas);
  return worst_sigmas <= 3.0;
}

// ---------------------------------------------------------------- criterion 7

bool criterion7(std::string& detail) {
  PolicyHyper hyper;
  hyper.embed_dim = 32;
  hyper.num_layers = 1;
  hyper.num_heads = 4;
  hyper.ff_dim = 64;

  // Width-1 beam must equal greedy decoding bitwise, on every problem kind.
  int beam_mismatches = 0;
  const ProblemKind kinds[] = {ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Mrpff};
  for (int i = 0; i < 100; ++i) {
    const ProblemKind kind = kinds[i % 3];
    hyper.kind = kind;
    const PolicyNet<float> net(hyper);
    const VecX<float> params = net.init_params(11 + i % 3);
    const Instance inst = generate_instance(kind, 12, 5000 + i);
    const Encoded<float> enc = net.encode(inst, params, false);
    SearchConfig greedy_cfg;
    SearchConfig beam_cfg;
    beam_cfg.mode = SearchMode::Beam;
    beam_cfg.beam_width = 1;
    const Solution a = solve(net, inst, params, enc, greedy_cfg);
    const Solution b = solve(net, inst, params, enc, beam_cfg);
    if (a.actions != b.actions || a.total_length != b.total_length) ++beam_mismatches;
  }

  // Best-of-64 sampling vs one independent sample.
  hyper.kind = ProblemKind::Tsp;
  const PolicyNet<float> net(hyper);
  const VecX<float> params = net.init_params(11);
  int best64_wins = 0;
  for (int i = 0; i < 1000; ++i) {
    const Instance inst = generate_instance(ProblemKind::Tsp, 20, 6000 + i);
    const Encoded<float> enc = net.encode(inst, params, false);
    SearchConfig one;
    one.mode = SearchMode::Sample;
    one.sample_k = 1;
    one.seed = 1;
    SearchConfig many = one;
    many.sample_k = 64;
    many.seed = 2;
    if (solve(net, inst, params, enc, many).total_length <=
        solve(net, inst, params, enc, one).total_length)
      ++best64_wins;
  }

  // 2-opt monotonicity over 1e4 random tours.
  int increase_violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const int n = 5 + i % 26;
    const Instance inst = generate_instance(ProblemKind::Tsp, n, 7000 + i);
    std::vector<int> tour(n);
    std::iota(tour.begin(), tour.end(), 0);
    Rng rng = make_rng(mix_seed(77, i));
    std::shuffle(tour.begin(), tour.end(), rng);
    const Solution sol = make_solution(inst, tour);
    if (two_opt(inst, sol).total_length > sol.total_length + 1e-9) ++increase_violations;
  }

  detail = fmt("beam(1) == greedy bitwise on 100/100 mixed-kind instances (%d mismatches); "
               "best-of-64 <= single sample on %d/1000 TSP20 (need >= 950); 2-opt increased "
               "length on %d/10000 random tours (need 0)",
               beam_mismatches, best64_wins, increase_violations);
  return beam_mismatches == 0 && best64_wins >= 950 && increase_violations == 0;
}

// ---------------------------------------------------------------- criterion 8

bool criterion8(std::string& detail) {
  PolicyHyper hyper;
  hyper.kind = ProblemKind::Cvrp;
  hyper.embed_dim = 16;
  hyper.num_layers = 1;
  hyper.num_heads = 2;
  hyper.ff_dim = 32;
  const PolicyNet<float> net(hyper);
  const VecX<float> params = net.init_params(13);

  GeneratorOptions opts;
  opts.capacity = 30;
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const Instance inst = generate_instance(ProblemKind::Cvrp, 20, 8000 + i, opts);
    const Encoded<float> enc = net.encode(inst, params, false);
    Rng rng = make_rng(mix_seed(9001, i));
    const Trajectory traj = net.rollout(inst, params, enc, DecodeMode::Sample, &rng);
    const ValidationReport report = validate(inst, traj.solution);
    if (!report.feasible) ++violations;
    if (i % 2000 == 1999) note(fmt("  %d/10000 rollouts validated", i + 1));
  }
  detail = fmt("10000 masked CVRP20 rollouts (capacity 30) against the route validator "
               "(per-route load, visit-once, depot structure): %d violations (need 0)",
               violations);
  return violations == 0;
}

// ---------------------------------------------------------------- criterion 9

bool criterion9(std::string& detail) {
  // Above the exhaustive-enumeration limit (9 nodes) the evaluation pipeline
  // scores methods against the best solution found in the run. Verify the
  // protocol: every gap is nonnegative and each instance's reference is
  // attained by some method, i.e. the reference is the in-run best.
  const int count = 50;
  std::vector<std::vector<double>> lengths(4, std::vector<double>(count));
  std::vector<double> reference(count);
  for (int i = 0; i < count; ++i) {
    const Instance inst = generate_instance(ProblemKind::Tsp, 12, 9500 + i);
    lengths[0][i] = two_opt(inst, nearest_neighbor(inst)).total_length;
    lengths[1][i] = two_opt(inst, nearest_insertion(inst)).total_length;
    lengths[2][i] = two_opt(inst, random_insertion(inst, i)).total_length;
    lengths[3][i] = two_opt(inst, farthest_insertion(inst)).total_length;
    reference[i] = std::min({lengths[0][i], lengths[1][i], lengths[2][i], lengths[3][i]});
  }
  bool protocol_ok = true;
  for (int m = 0; m < 4; ++m)
    if (evaluate_gap(lengths[m], reference) < -1e-12) protocol_ok = false;
  for (int i = 0; i < count; ++i) {
    const bool attained = lengths[0][i] == reference[i] || lengths[1][i] == reference[i] ||
                          lengths[2][i] == reference[i] || lengths[3][i] == reference[i];
    if (!attained) protocol_ok = false;
  }
  detail = fmt("NOT reproduced (out of scope): CVRP/MRPFF result tables at n >= 50/100, and "
               "all LKH3 / Concorde / OR-Tools reference rows (no external solvers shipped; "
               "full-scale training budgets excluded). Gaps for n > 9 use the best solution "
               "found in the run, labeled best-known rather than optimal; protocol verified "
               "on 50 TSP12 instances (all gaps >= 0, reference attained): %s",
               protocol_ok ? "ok" : "violated");
  return protocol_ok;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1..9>\n");
    return 2;
  }
  const int criterion = std::atoi(argv[1]);
  bool (*checks[])(std::string&) = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                    criterion6, criterion7, criterion8, criterion9};
  if (criterion < 1 || criterion > 9) {
    std::fprintf(stderr, "usage: acceptance <criterion 1..9>\n");
    return 2;
  }
  bool ok = false;
  std::string detail;
  try {
    ok = checks[criterion - 1](detail);
  } catch (const std::exception& e) {
    detail = fmt("unexpected exception: %s", e.what());
    ok = false;
  }
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
  return ok ? 0 : 1;
}
