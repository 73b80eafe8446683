// CLI for the routing-policy toolkit: dataset generation, training, alpha x
// lr sweeps, benchmark evaluation and learning-curve merging.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "errl/errors.hpp"
#include "errl/heuristics.hpp"
#include "errl/io.hpp"
#include "errl/parallel.hpp"
#include "errl/search.hpp"
#include "errl/training.hpp"

namespace {

using namespace errl;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Flag-value parse failures are usage errors, not data errors.
ProblemKind kind_from_flag(const std::string& s) {
  try {
    return problem_kind_from_string(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string kind = "tsp";
  int n = 20;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
  int capacity = 0;
  int routes = 2;
};

void cmd_generate(const GenerateArgs& a) {
  const ProblemKind kind = kind_from_flag(a.kind);
  GeneratorOptions opts;
  opts.capacity = a.capacity;
  opts.num_routes = a.routes;
  std::vector<Instance> instances;
  instances.reserve(a.count);
  for (int i = 0; i < a.count; ++i)
    instances.push_back(generate_instance(kind, a.n, a.seed + static_cast<std::uint64_t>(i), opts));
  write_instances(a.out, instances);
  std::printf("wrote %d %s instance(s) to %s\n", a.count, a.kind.c_str(), a.out.c_str());
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string resume;
  std::string kind;
  int n = 0;
  double alpha = 0, lr = 0;
  int batch = 0, traj = 0, epochs = 0, steps = 0;
  std::uint64_t seed = 0;
  std::string trainer, baseline, precision;
  int embed = 0, layers = -1, heads = 0, ff = 0;
  int val_size = 0, capacity = 0, routes = 0;
  double grad_clip = 0, weight_decay = -1;
  bool lr_decay = false, entropy_in_reward = false;
  std::string out;
};

// Builds the config as defaults < --config file < explicit flags.
TrainConfig build_train_config(const TrainArgs& a, const CLI::App* sub) {
  TrainConfig cfg;
  if (!a.config_path.empty()) cfg.apply_config(Config::from_file(a.config_path));
  auto given = [sub](const std::string& flag) { return sub->count(flag) > 0; };
  if (given("--kind")) cfg.kind = kind_from_flag(a.kind);
  if (given("--n")) cfg.n = a.n;
  if (given("--alpha")) cfg.alpha = a.alpha;
  if (given("--lr")) cfg.lr = a.lr;
  if (given("--batch")) cfg.batch_size = a.batch;
  if (given("--traj-per-instance")) cfg.traj_per_instance = a.traj;
  if (given("--epochs")) cfg.epochs = a.epochs;
  if (given("--steps-per-epoch")) cfg.steps_per_epoch = a.steps;
  if (given("--seed")) cfg.seed = a.seed;
  try {
    if (given("--trainer")) cfg.trainer = trainer_from_string(a.trainer);
    if (given("--baseline")) cfg.baseline = baseline_from_string(a.baseline);
    if (given("--precision")) cfg.precision = precision_from_string(a.precision);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  if (given("--embed-dim")) cfg.hyper.embed_dim = a.embed;
  if (given("--layers")) cfg.hyper.num_layers = a.layers;
  if (given("--heads")) cfg.hyper.num_heads = a.heads;
  if (given("--ff-dim")) cfg.hyper.ff_dim = a.ff;
  if (given("--val-size")) cfg.val_size = a.val_size;
  if (given("--capacity")) cfg.gen.capacity = a.capacity;
  if (given("--routes")) cfg.gen.num_routes = a.routes;
  if (given("--grad-clip")) cfg.grad_clip_norm = a.grad_clip;
  if (given("--weight-decay")) cfg.weight_decay = a.weight_decay;
  if (given("--lr-decay")) cfg.lr_decay = a.lr_decay;
  if (given("--entropy-in-reward")) cfg.entropy_in_reward = a.entropy_in_reward;
  cfg.hyper.kind = cfg.kind;
  return cfg;
}

void add_train_flags(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--config", a.config_path, "key=value config file");
  sub->add_option("--kind", a.kind, "problem kind: tsp|cvrp|mrpff");
  sub->add_option("--n", a.n, "instance size (customers for depot problems)");
  sub->add_option("--alpha", a.alpha, "entropy coefficient");
  sub->add_option("--lr", a.lr, "learning rate");
  sub->add_option("--batch", a.batch, "instances per gradient step");
  sub->add_option("--traj-per-instance", a.traj, "sampled trajectories per instance");
  sub->add_option("--epochs", a.epochs, "training epochs");
  sub->add_option("--steps-per-epoch", a.steps, "gradient steps per epoch");
  sub->add_option("--seed", a.seed, "master seed");
  sub->add_option("--trainer", a.trainer, "errl1|errl2");
  sub->add_option("--baseline", a.baseline, "shared-mean|greedy|none");
  sub->add_option("--precision", a.precision, "float32|float64");
  sub->add_option("--embed-dim", a.embed, "embedding width");
  sub->add_option("--layers", a.layers, "encoder layers");
  sub->add_option("--heads", a.heads, "attention heads");
  sub->add_option("--ff-dim", a.ff, "feed-forward width");
  sub->add_option("--val-size", a.val_size, "validation instances per epoch");
  sub->add_option("--capacity", a.capacity, "vehicle capacity override");
  sub->add_option("--routes", a.routes, "route count (mrpff)");
  sub->add_option("--grad-clip", a.grad_clip, "gradient norm clip");
  sub->add_option("--weight-decay", a.weight_decay, "L2 coefficient");
  sub->add_flag("--lr-decay", a.lr_decay, "staircase lr decay (0.96 / 5000 steps)");
  sub->add_flag("--entropy-in-reward", a.entropy_in_reward, "fold entropy into the reward");
}

void cmd_train(const TrainArgs& a, const CLI::App* sub) {
  TrainConfig cfg = build_train_config(a, sub);
  if (sub->count("--out")) cfg.out_dir = a.out;
  cfg.progress = true;
  const TrainReport report = train(cfg, a.resume);
  std::printf("final validation mean length: %.4f\n", report.final_val_length);
  if (!report.checkpoint_path.empty())
    std::printf("checkpoint: %s\nmetrics: %s\n", report.checkpoint_path.c_str(),
                report.metrics_path.c_str());
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  TrainArgs train;
  std::string alphas, lrs;
  std::string out;
};

void cmd_sweep(const SweepArgs& a, const CLI::App* sub) {
  std::filesystem::create_directories(a.out);
  const std::string table_path = a.out + "/sweep.csv";
  std::ofstream table(table_path);
  if (!table) throw DataError("cannot write " + table_path);
  table << "alpha,lr,final_val_length\n";

  const auto alphas = split_list(a.alphas);
  const auto lrs = split_list(a.lrs);
  int run_index = 0;
  for (const auto& alpha_s : alphas) {
    for (const auto& lr_s : lrs) {
      TrainConfig cfg = build_train_config(a.train, sub);
      try {
        cfg.alpha = std::stod(alpha_s);
        cfg.lr = std::stod(lr_s);
      } catch (const std::exception&) {
        throw UsageError("bad sweep grid value: alpha='" + alpha_s + "' lr='" + lr_s + "'");
      }
      cfg.out_dir = a.out + "/run_alpha" + alpha_s + "_lr" + lr_s;
      cfg.progress = true;
      std::printf("[sweep %d/%zu] alpha=%s lr=%s\n", ++run_index, alphas.size() * lrs.size(),
                  alpha_s.c_str(), lr_s.c_str());
      const TrainReport report = train(cfg);
      table << alpha_s << ',' << lr_s << ',' << format_double(report.final_val_length) << '\n';
      table.flush();
    }
  }
  std::printf("sweep table: %s\n", table_path.c_str());
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string instances;
  std::vector<std::string> modes;
  std::string baselines;
  bool two_opt = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct MethodResult {
  std::string name;
  std::vector<double> lengths;
  std::vector<double> seconds;
  std::vector<long> candidates;
};

template <typename S>
void run_model_methods(const Checkpoint& ck, const std::vector<Instance>& instances,
                       const EvalArgs& a, std::vector<MethodResult>& results) {
  PolicyHyper hyper = ck.config.hyper;
  hyper.kind = ck.config.kind;
  const PolicyNet<S> net(hyper);
  const VecX<S> params = ck.params.cast<S>();
  const int threads = thread_count();

  std::vector<SearchConfig> configs;
  std::vector<std::string> names;
  for (const auto& mode : a.modes) {
    SearchConfig cfg = SearchConfig::parse_mode(mode);
    cfg.seed = a.seed;
    configs.push_back(cfg);
    names.push_back("model/" + cfg.mode_name());
    if (a.two_opt) {
      cfg.post_2opt = true;
      configs.push_back(cfg);
      names.push_back("model/" + cfg.mode_name() + "+2opt");
    }
  }

  for (std::size_t m = 0; m < configs.size(); ++m) {
    MethodResult r;
    r.name = names[m];
    r.lengths.resize(instances.size());
    r.seconds.resize(instances.size());
    r.candidates.resize(instances.size());
    parallel_for(static_cast<int>(instances.size()), threads, [&](int i) {
      SearchMetrics sm;
      const Solution sol = solve(net, instances[i], params, configs[m], &sm);
      r.lengths[i] = sol.total_length;
      r.seconds[i] = sm.seconds;
      r.candidates[i] = sm.candidates;
    });
    results.push_back(std::move(r));
  }
}

void run_baselines(const std::vector<Instance>& instances, const EvalArgs& a,
                   std::vector<MethodResult>& results) {
  struct Heuristic {
    std::string name;
    std::function<Solution(const Instance&, int)> fn;
  };
  std::vector<Heuristic> chosen;
  for (const auto& name : split_list(a.baselines)) {
    if (name == "nearest-neighbor" || name == "nn")
      chosen.push_back({"nearest-neighbor", [](const Instance& x, int) { return nearest_neighbor(x); }});
    else if (name == "nearest-insertion" || name == "ni")
      chosen.push_back({"nearest-insertion", [](const Instance& x, int) { return nearest_insertion(x); }});
    else if (name == "random-insertion" || name == "ri")
      chosen.push_back({"random-insertion", [seed = a.seed](const Instance& x, int i) {
                          return random_insertion(x, mix_seed(seed, i));
                        }});
    else if (name == "farthest-insertion" || name == "fi")
      chosen.push_back({"farthest-insertion", [](const Instance& x, int) { return farthest_insertion(x); }});
    else
      throw UsageError("unknown baseline '" + name + "'");
  }
  const int threads = thread_count();
  for (const auto& h : chosen) {
    MethodResult r;
    r.name = h.name;
    r.lengths.resize(instances.size());
    r.seconds.resize(instances.size());
    r.candidates.assign(instances.size(), 1);
    parallel_for(static_cast<int>(instances.size()), threads, [&](int i) {
      const auto t0 = std::chrono::steady_clock::now();
      r.lengths[i] = h.fn(instances[i], i).total_length;
      r.seconds[i] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    results.push_back(std::move(r));
  }
}

void cmd_eval(const EvalArgs& a) {
  const std::vector<Instance> instances = read_instances(a.instances);
  if (instances.empty()) throw DataError("no instances in " + a.instances);
  const ProblemKind kind = instances[0].kind;
  for (const auto& inst : instances)
    if (inst.kind != kind) throw DataError("mixed problem kinds in " + a.instances);

  if (!a.modes.empty() && a.checkpoint.empty())
    throw UsageError("--mode requires --checkpoint");

  std::vector<MethodResult> results;
  if (!a.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.config.kind != kind)
      throw DataError("checkpoint kind " + to_string(ck.config.kind) +
                      " does not match instance kind " + to_string(kind));
    if (ck.config.precision == Precision::Float32)
      run_model_methods<float>(ck, instances, a, results);
    else
      run_model_methods<double>(ck, instances, a, results);
  }
  run_baselines(instances, a, results);
  if (results.empty()) throw UsageError("nothing to evaluate: give --mode and/or --baselines");

  // Gap reference: exhaustive optimum for small TSP, otherwise the best
  // solution any evaluated method found (a best-known bound, not an optimum).
  const bool exact_ref = kind == ProblemKind::Tsp && instances[0].num_nodes() <= 9;
  std::vector<double> reference(instances.size(), std::numeric_limits<double>::infinity());
  if (exact_ref) {
    for (std::size_t i = 0; i < instances.size(); ++i)
      reference[i] = exhaustive_tsp_optimum(instances[i]).total_length;
  } else {
    for (const auto& r : results)
      for (std::size_t i = 0; i < instances.size(); ++i)
        reference[i] = std::min(reference[i], r.lengths[i]);
  }

  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    const std::string csv_path = a.out + "/eval.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot write " + csv_path);
    csv << "instance_id,method,length,gap_pct,seconds,candidates_evaluated\n";
    for (const auto& r : results)
      for (std::size_t i = 0; i < instances.size(); ++i)
        csv << i << ',' << r.name << ',' << format_double(r.lengths[i]) << ','
            << format_double((r.lengths[i] / reference[i] - 1.0) * 100.0) << ','
            << format_double(r.seconds[i]) << ',' << r.candidates[i] << '\n';
    std::printf("per-instance report: %s\n", csv_path.c_str());
  }

  std::printf("gap reference: %s\n",
              exact_ref ? "exhaustive optimum"
                        : "best solution found in this run (best-known, not optimal)");
  std::size_t width = 6;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::printf("%-*s  %10s  %8s  %12s\n", static_cast<int>(width), "method", "TourL", "Gap(%)",
              "Time(s/inst)");
  for (const auto& r : results) {
    double len = 0, sec = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      len += r.lengths[i];
      sec += r.seconds[i];
    }
    len /= instances.size();
    sec /= instances.size();
    const double gap = evaluate_gap(r.lengths, reference);
    std::printf("%-*s  %10.4f  %8.2f  %12.6f\n", static_cast<int>(width), r.name.c_str(), len,
                gap, sec);
  }
}

// ------------------------------------------------------------------ curves

struct CurvesArgs {
  std::vector<std::string> inputs;
  std::string out;
};

void cmd_curves(const CurvesArgs& a) {
  constexpr const char* kHeader = "epoch,mean_val_length,mean_entropy,baseline_mean,grad_norm,seconds";
  struct Run {
    std::string label;
    std::map<long, std::string> rows;  // epoch -> row tail (after the epoch cell)
  };
  std::vector<Run> runs;
  std::set<long> epochs;
  std::set<std::string> labels;
  for (const auto& path : a.inputs) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
      throw DataError(path + ": expected metrics header '" + std::string(kHeader) + "'");
    Run run;
    run.label = std::filesystem::path(path).stem().string();
    for (int k = 2; !labels.insert(run.label).second; ++k)
      run.label = std::filesystem::path(path).stem().string() + "#" + std::to_string(k);
    int line_number = 1;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      long epoch = 0;
      try {
        std::size_t used = 0;
        epoch = std::stol(line.substr(0, comma), &used);
        if (comma == std::string::npos || used != comma) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_number) + ": malformed metrics row");
      }
      run.rows[epoch] = line.substr(comma + 1);
      epochs.insert(epoch);
    }
    runs.push_back(std::move(run));
  }

  std::ofstream out(a.out);
  if (!out) throw DataError("cannot write " + a.out);
  out << "run," << kHeader << '\n';
  for (const auto& run : runs)
    for (long epoch : epochs) {
      const auto it = run.rows.find(epoch);
      out << run.label << ',' << epoch << ',' << (it == run.rows.end() ? ",,,," : it->second)
          << '\n';
    }
  std::printf("curve table (%zu runs, %zu epochs): %s\n", runs.size(), epochs.size(),
              a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned construction heuristics for routing problems"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* sub_gen = app.add_subcommand("generate", "write a random instance file");
  sub_gen->add_option("--kind", gen.kind, "tsp|cvrp|mrpff")->required();
  sub_gen->add_option("--n", gen.n, "instance size")->required();
  sub_gen->add_option("--count", gen.count, "number of instances");
  sub_gen->add_option("--seed", gen.seed, "base seed (instance i uses seed+i)");
  sub_gen->add_option("--out", gen.out, "output file")->required();
  sub_gen->add_option("--capacity", gen.capacity, "vehicle capacity override");
  sub_gen->add_option("--routes", gen.routes, "route count (mrpff)");

  TrainArgs tr;
  auto* sub_train = app.add_subcommand("train", "train a policy");
  add_train_flags(sub_train, tr);
  sub_train->add_option("--out", tr.out, "output directory (metrics.csv, checkpoint.json)");
  sub_train->add_option("--resume", tr.resume, "continue from a checkpoint");

  SweepArgs sw;
  auto* sub_sweep = app.add_subcommand("sweep", "alpha x lr grid of training runs");
  add_train_flags(sub_sweep, sw.train);
  sub_sweep->add_option("--alphas", sw.alphas, "comma list of entropy coefficients");
  sub_sweep->add_option("--lrs", sw.lrs, "comma list of learning rates");
  sub_sweep->add_option("--out", sw.out, "sweep output directory")->required();

  EvalArgs ev;
  auto* sub_eval = app.add_subcommand("eval", "benchmark methods on an instance file");
  sub_eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint");
  sub_eval->add_option("--instances", ev.instances, "instance file")->required();
  sub_eval->add_option("--mode", ev.modes, "greedy|sample:K|beam:W (repeatable)");
  sub_eval->add_option("--baselines", ev.baselines,
                       "comma list: nearest-neighbor,nearest-insertion,random-insertion,"
                       "farthest-insertion");
  sub_eval->add_flag("--two-opt", ev.two_opt, "add a 2-opt post-processed row per mode");
  sub_eval->add_option("--seed", ev.seed, "sampling seed");
  sub_eval->add_option("--out", ev.out, "report directory");

  CurvesArgs cu;
  auto* sub_curves = app.add_subcommand("curves", "merge metrics CSVs for plotting");
  sub_curves->add_option("inputs", cu.inputs, "metrics.csv files")->required();
  sub_curves->add_option("--out", cu.out, "merged output file")->required();

  try {
    app.parse(argc, argv);
    if (*sub_gen) cmd_generate(gen);
    if (*sub_train) cmd_train(tr, sub_train);
    if (*sub_sweep) cmd_sweep(sw, sub_sweep);
    if (*sub_eval) cmd_eval(ev);
    if (*sub_curves) cmd_curves(cu);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
