#pragma once

// Entropy-regularized policy-gradient trainers: a multi-trajectory
// shared-baseline REINFORCE variant and an actor-critic variant with a
// learned value head. Both maximize  E[R] + alpha * E[H]  where R is the
// negative tour length and H the per-step-normalized trajectory entropy.

#include <cstdint>
#include <string>
#include <vector>

#include "errl/config.hpp"
#include "errl/policy.hpp"

namespace errl {

enum class TrainerKind { Errl1, Errl2 };
enum class BaselineKind { SharedMean, GreedyRollout, None };
enum class Precision { Float32, Float64 };

std::string to_string(TrainerKind t);
std::string to_string(BaselineKind b);
std::string to_string(Precision p);
TrainerKind trainer_from_string(const std::string& s);
BaselineKind baseline_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

struct TrainConfig {
  ProblemKind kind = ProblemKind::Tsp;
  int n = 20;  // customers for depot problems, nodes for TSP
  GeneratorOptions gen;
  PolicyHyper hyper;  // hyper.kind is kept in sync with `kind`
  TrainerKind trainer = TrainerKind::Errl1;
  BaselineKind baseline = BaselineKind::SharedMean;
  bool entropy_in_reward = false;  // reward-shaping variant R + alpha*H
  double alpha = 0.3;
  double lr = 1e-4;
  int batch_size = 128;
  int traj_per_instance = 8;  // sampled trajectories per instance (trainer 1)
  int epochs = 100;
  int steps_per_epoch = 100;
  double grad_clip_norm = 2.0;
  bool lr_decay = false;  // staircase decay (actor-critic profile)
  double lr_decay_factor = 0.96;
  int lr_decay_steps = 5000;
  double weight_decay = 0.0;
  int val_size = 1000;
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;
  std::string out_dir;  // when set: metrics.csv + checkpoint.json
  int threads = 0;      // 0 = ERRL_THREADS env (default 1)
  bool progress = false;  // per-epoch line on stdout

  void validate() const;  // throws std::invalid_argument
  static TrainConfig from_config(const Config& file);
  void apply_config(const Config& file);
};

struct EpochMetrics {
  int epoch = 0;
  double mean_val_length = 0.0;
  double mean_entropy = 0.0;  // mean per-step policy entropy while training
  double baseline_mean = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over the epoch's steps
  double seconds = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  double final_val_length = 0.0;
  std::string checkpoint_path;
  std::string metrics_path;
};

struct Checkpoint {
  int version = 1;
  TrainConfig config;
  Vecd params;
  Vecd adam_m, adam_v;
  long adam_t = 0;
  int epochs_done = 0;
  long global_step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // throws DataError

// Aggregates for step metrics, filled per instance during gradient work.
struct InstanceGradStats {
  double reward_sum = 0.0;
  double entropy_sum = 0.0;  // summed per-step entropies
  long steps = 0;
  double baseline_sum = 0.0;
  long baseline_count = 0;
};

// Adds this instance's sampled-gradient contribution (the ascent direction,
// averaged over the num_traj trajectories but not over the batch) into
// `grad`:  (1/N) sum_j [(R_j - b_j) dlogP_j + (alpha/T_j) dH_j].  The shared
// baseline is the leave-one-out mean of the other trajectories' rewards so
// the baseline term has exactly zero expected contribution. `enc` must carry
// the encoder tape.
template <typename S>
void errl1_instance_gradient(const PolicyNet<S>& net, const Instance& inst,
                             const VecX<S>& params, const Encoded<S>& enc, int num_traj,
                             double alpha, BaselineKind baseline, bool entropy_in_reward,
                             Rng& rng, VecX<S>& grad, InstanceGradStats* stats = nullptr);

// Actor-critic single-trajectory version: advantage R - V(s), plus the value
// head's squared-error gradient (confined to the head). Ascent direction on
// [policy objective - critic loss].
template <typename S>
void errl2_instance_gradient(const PolicyNet<S>& net, const Instance& inst,
                             const VecX<S>& params, const Encoded<S>& enc, double alpha,
                             bool entropy_in_reward, Rng& rng, VecX<S>& grad,
                             InstanceGradStats* stats = nullptr);

// Mean greedy-decoded tour length over `count` fresh instances drawn from the
// (seed, epoch) validation stream.
double validation_mean_length(const TrainConfig& cfg, const Vecd& params_f64, int epoch);

// Runs (or resumes) a training job. With resume_from set, optimizer state,
// parameters and counters continue bitwise from the checkpoint.
TrainReport train(const TrainConfig& cfg, const std::string& resume_from = "");

// ---------------------------------------------------------------------------
// template implementation
// ---------------------------------------------------------------------------

namespace detail {
constexpr std::uint64_t kTagRollout = 0x726f6c6cu;  // trajectory sampling
constexpr std::uint64_t kTagTrain = 0x7472u;        // training instance stream
constexpr std::uint64_t kTagVal = 0x76616cu;        // validation instance stream
}  // namespace detail

template <typename S>
void errl1_instance_gradient(const PolicyNet<S>& net, const Instance& inst,
                             const VecX<S>& params, const Encoded<S>& enc, int num_traj,
                             double alpha, BaselineKind baseline, bool entropy_in_reward,
                             Rng& rng, VecX<S>& grad, InstanceGradStats* stats) {
  if (num_traj < 2 && baseline == BaselineKind::SharedMean)
    throw std::invalid_argument("shared-mean baseline needs at least 2 trajectories");
  const int N = num_traj;

  std::vector<DecodeTape<S>> tapes(N);
  std::vector<Trajectory> trajs(N);
  std::vector<double> returns(N);  // reward, possibly entropy-shaped
  for (int j = 0; j < N; ++j) {
    trajs[j] = net.rollout(inst, params, enc, DecodeMode::Sample, &rng, &tapes[j]);
    returns[j] = trajs[j].reward;
    if (entropy_in_reward)
      returns[j] += alpha * trajs[j].entropy / trajs[j].num_steps();
  }

  double greedy_return = 0.0;
  if (baseline == BaselineKind::GreedyRollout) {
    const Trajectory g = net.rollout(inst, params, enc, DecodeMode::Greedy, nullptr, nullptr);
    greedy_return = g.reward;
    if (entropy_in_reward) greedy_return += alpha * g.entropy / g.num_steps();
  }

  double return_sum = 0.0;
  for (double r : returns) return_sum += r;

  std::vector<TrajectoryGrad<S>> tg(N);
  for (int j = 0; j < N; ++j) {
    double b = 0.0;
    switch (baseline) {
      case BaselineKind::SharedMean: b = (return_sum - returns[j]) / (N - 1); break;
      case BaselineKind::GreedyRollout: b = greedy_return; break;
      case BaselineKind::None: b = 0.0; break;
    }
    tg[j].tape = &tapes[j];
    tg[j].coef_logp = (returns[j] - b) / N;
    tg[j].coef_ent = entropy_in_reward ? 0.0 : alpha / (trajs[j].num_steps() * double(N));
    if (stats) {
      stats->reward_sum += trajs[j].reward;
      stats->entropy_sum += trajs[j].entropy;
      stats->steps += trajs[j].num_steps();
      stats->baseline_sum += b;
      ++stats->baseline_count;
    }
  }
  net.accumulate_gradient(inst, params, enc, tg, 0.0, grad);
}

template <typename S>
void errl2_instance_gradient(const PolicyNet<S>& net, const Instance& inst,
                             const VecX<S>& params, const Encoded<S>& enc, double alpha,
                             bool entropy_in_reward, Rng& rng, VecX<S>& grad,
                             InstanceGradStats* stats) {
  DecodeTape<S> tape;
  const Trajectory traj = net.rollout(inst, params, enc, DecodeMode::Sample, &rng, &tape);
  double ret = traj.reward;
  if (entropy_in_reward) ret += alpha * traj.entropy / traj.num_steps();
  const double v = net.critic_value(inst, params, enc);

  std::vector<TrajectoryGrad<S>> tg(1);
  tg[0].tape = &tape;
  tg[0].coef_logp = ret - v;
  tg[0].coef_ent = entropy_in_reward ? 0.0 : alpha / traj.num_steps();
  // Ascent on -(R - V)^2 for the value head.
  net.accumulate_gradient(inst, params, enc, tg, 2.0 * (ret - v), grad);

  if (stats) {
    stats->reward_sum += traj.reward;
    stats->entropy_sum += traj.entropy;
    stats->steps += traj.num_steps();
    stats->baseline_sum += v;
    ++stats->baseline_count;
  }
}

}  // namespace errl
