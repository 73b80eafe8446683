#include "errl/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "errl/adam.hpp"
#include "errl/errors.hpp"
#include "errl/io.hpp"
#include "errl/parallel.hpp"

namespace errl {

namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

json config_to_json(const TrainConfig& c) {
  return json{{"kind", to_string(c.kind)},
              {"n", c.n},
              {"capacity", c.gen.capacity},
              {"routes", c.gen.num_routes},
              {"embed_dim", c.hyper.embed_dim},
              {"num_layers", c.hyper.num_layers},
              {"num_heads", c.hyper.num_heads},
              {"ff_dim", c.hyper.ff_dim},
              {"logit_clip", c.hyper.logit_clip},
              {"trainer", to_string(c.trainer)},
              {"baseline", to_string(c.baseline)},
              {"entropy_in_reward", c.entropy_in_reward},
              {"alpha", c.alpha},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"traj_per_instance", c.traj_per_instance},
              {"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"grad_clip_norm", c.grad_clip_norm},
              {"lr_decay", c.lr_decay},
              {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_steps", c.lr_decay_steps},
              {"weight_decay", c.weight_decay},
              {"val_size", c.val_size},
              {"seed", c.seed},
              {"precision", to_string(c.precision)}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.kind = problem_kind_from_string(j.at("kind").get<std::string>());
  c.n = j.at("n").get<int>();
  c.gen.capacity = j.at("capacity").get<int>();
  c.gen.num_routes = j.at("routes").get<int>();
  c.hyper.embed_dim = j.at("embed_dim").get<int>();
  c.hyper.num_layers = j.at("num_layers").get<int>();
  c.hyper.num_heads = j.at("num_heads").get<int>();
  c.hyper.ff_dim = j.at("ff_dim").get<int>();
  c.hyper.logit_clip = j.at("logit_clip").get<double>();
  c.trainer = trainer_from_string(j.at("trainer").get<std::string>());
  c.baseline = baseline_from_string(j.at("baseline").get<std::string>());
  c.entropy_in_reward = j.at("entropy_in_reward").get<bool>();
  c.alpha = j.at("alpha").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.traj_per_instance = j.at("traj_per_instance").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.lr_decay = j.at("lr_decay").get<bool>();
  c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  c.lr_decay_steps = j.at("lr_decay_steps").get<int>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.val_size = j.at("val_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.precision = precision_from_string(j.at("precision").get<std::string>());
  c.hyper.kind = c.kind;
  return c;
}

json vec_to_json(const Vecd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vecd vec_from_json(const json& a) {
  Vecd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

// The two trainers differ only in how a single instance contributes to the
// gradient, so the driver is shared and dispatches per instance.
template <typename S>
struct Driver {
  TrainConfig cfg;
  PolicyNet<S> net;
  VecX<S> params;
  AdamState<S> adam;
  long global_step = 0;
  int epochs_done = 0;

  explicit Driver(const TrainConfig& c) : cfg(c), net(c.hyper) {}

  void instance_gradient(const Instance& inst, const Encoded<S>& enc, Rng& rng, VecX<S>& grad,
                         InstanceGradStats& stats) const {
    if (cfg.trainer == TrainerKind::Errl1)
      errl1_instance_gradient(net, inst, params, enc, cfg.traj_per_instance, cfg.alpha,
                              cfg.baseline, cfg.entropy_in_reward, rng, grad, &stats);
    else
      errl2_instance_gradient(net, inst, params, enc, cfg.alpha, cfg.entropy_in_reward, rng,
                              grad, &stats);
  }

  double validate_epoch(int epoch, int threads) const {
    std::vector<double> lengths(cfg.val_size);
    parallel_for(cfg.val_size, threads, [&](int i) {
      const Instance inst = generate_instance(
          cfg.kind, cfg.n, mix_seed(cfg.seed, detail::kTagVal, epoch, i), cfg.gen);
      const Encoded<S> enc = net.encode(inst, params, /*with_tape=*/false);
      lengths[i] =
          net.rollout(inst, params, enc, DecodeMode::Greedy, nullptr).solution.total_length;
    });
    double sum = 0.0;
    for (double l : lengths) sum += l;
    return sum / cfg.val_size;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.config = cfg;
    ck.params = params.template cast<double>();
    ck.adam_m = adam.m.template cast<double>();
    ck.adam_v = adam.v.template cast<double>();
    ck.adam_t = adam.t;
    ck.epochs_done = epochs_done;
    ck.global_step = global_step;
    return ck;
  }

  void restore(const Checkpoint& ck) {
    params = ck.params.cast<S>();
    adam.m = ck.adam_m.cast<S>();
    adam.v = ck.adam_v.cast<S>();
    adam.t = ck.adam_t;
    epochs_done = ck.epochs_done;
    global_step = ck.global_step;
  }
};

// Structural compatibility between a resume checkpoint and the requested run.
void check_resume_compatible(const Checkpoint& ck, const TrainConfig& b) {
  const json ja = config_to_json(ck.config);
  json jb = config_to_json(b);
  // The total epoch budget may grow on resume; everything else must match.
  jb["epochs"] = ja.at("epochs");
  if (ja != jb)
    throw DataError("resume checkpoint was trained with a different configuration");
  if (b.epochs < ck.epochs_done)
    throw DataError("resume epoch budget (" + std::to_string(b.epochs) +
                    ") is below the checkpoint's completed epochs (" +
                    std::to_string(ck.epochs_done) + ")");
}

template <typename S>
TrainReport train_impl(TrainConfig cfg, const std::string& resume_from) {
  cfg.hyper.kind = cfg.kind;
  cfg.validate();
  const int threads = cfg.threads > 0 ? cfg.threads : thread_count();

  Driver<S> d(cfg);
  if (!resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(resume_from);
    check_resume_compatible(ck, cfg);
    d.restore(ck);
  } else {
    d.params = d.net.init_params(cfg.seed);
    d.adam.reset(d.net.num_params());
  }

  TrainReport report;
  report.config = cfg;

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    report.metrics_path = cfg.out_dir + "/metrics.csv";
    report.checkpoint_path = cfg.out_dir + "/checkpoint.json";
    const bool append = d.epochs_done > 0 && std::filesystem::exists(report.metrics_path);
    metrics.open(report.metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw DataError("cannot write " + report.metrics_path);
    if (!append) metrics << "epoch,mean_val_length,mean_entropy,baseline_mean,grad_norm,seconds\n";
  }

  const int B = cfg.batch_size;
  std::vector<VecX<S>> grads(B);
  std::vector<InstanceGradStats> stats(B);
  std::vector<Instance> batch(B);
  VecX<S> gsum(d.net.num_params());
  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};

  for (int epoch = d.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    double ent_sum = 0.0, base_sum = 0.0, norm_sum = 0.0;
    long step_count = 0, base_count = 0;

    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      for (int i = 0; i < B; ++i)
        batch[i] = generate_instance(cfg.kind, cfg.n,
                                     mix_seed(cfg.seed, detail::kTagTrain, d.global_step, i),
                                     cfg.gen);
      parallel_for(B, threads, [&](int i) {
        grads[i].setZero(d.net.num_params());
        stats[i] = InstanceGradStats{};
        const Encoded<S> enc = d.net.encode(batch[i], d.params, /*with_tape=*/true);
        Rng rng = make_rng(mix_seed(cfg.seed, detail::kTagRollout, d.global_step, i));
        d.instance_gradient(batch[i], enc, rng, grads[i], stats[i]);
      });

      gsum.setZero();
      for (int i = 0; i < B; ++i) gsum += grads[i];  // fixed order: deterministic
      gsum *= S(-1.0 / B);                           // descent on the negated objective
      if (!gsum.allFinite()) {
        std::string seeds;
        for (int i = 0; i < B; ++i)
          seeds += (i ? "," : "") + std::to_string(batch[i].seed);
        throw NumericalError("non-finite gradient at step " + std::to_string(d.global_step) +
                             "; batch instance seeds: " + seeds);
      }
      if (cfg.weight_decay > 0.0) gsum += static_cast<S>(cfg.weight_decay) * d.params;
      const double norm = clip_global_norm(gsum, cfg.grad_clip_norm);
      const double lr_scale =
          cfg.lr_decay ? std::pow(cfg.lr_decay_factor,
                                  static_cast<double>(d.global_step / cfg.lr_decay_steps))
                       : 1.0;
      adam_update(d.params, gsum, d.adam, adam_cfg, lr_scale);
      d.net.check_finite(d.params, "after update at step " + std::to_string(d.global_step));

      for (int i = 0; i < B; ++i) {
        ent_sum += stats[i].entropy_sum;
        step_count += stats[i].steps;
        base_sum += stats[i].baseline_sum;
        base_count += stats[i].baseline_count;
      }
      norm_sum += norm;
      ++d.global_step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_val_length = d.validate_epoch(epoch, threads);
    m.mean_entropy = step_count > 0 ? ent_sum / step_count : 0.0;
    m.baseline_mean = base_count > 0 ? base_sum / base_count : 0.0;
    m.grad_norm = norm_sum / cfg.steps_per_epoch;
    m.seconds = now_seconds() - t0;
    d.epochs_done = epoch;
    report.epochs.push_back(m);
    report.final_val_length = m.mean_val_length;

    if (metrics.is_open()) {
      metrics << m.epoch << ',' << format_double(m.mean_val_length) << ','
              << format_double(m.mean_entropy) << ',' << format_double(m.baseline_mean) << ','
              << format_double(m.grad_norm) << ',' << format_double(m.seconds) << '\n';
      metrics.flush();
    }
    if (cfg.progress) {
      std::printf("epoch %4d  val %.4f  entropy %.4f  baseline %.4f  gnorm %.3f  %.1fs\n",
                  m.epoch, m.mean_val_length, m.mean_entropy, m.baseline_mean, m.grad_norm,
                  m.seconds);
      std::fflush(stdout);
    }
    if (!report.checkpoint_path.empty()) save_checkpoint(report.checkpoint_path, d.to_checkpoint());
  }

  if (report.epochs.empty() && !resume_from.empty())
    report.final_val_length = d.validate_epoch(std::max(1, d.epochs_done), threads);
  return report;
}

}  // namespace

std::string to_string(TrainerKind t) { return t == TrainerKind::Errl1 ? "errl1" : "errl2"; }
std::string to_string(BaselineKind b) {
  switch (b) {
    case BaselineKind::SharedMean: return "shared-mean";
    case BaselineKind::GreedyRollout: return "greedy";
    case BaselineKind::None: return "none";
  }
  return "shared-mean";
}
std::string to_string(Precision p) { return p == Precision::Float32 ? "float32" : "float64"; }

TrainerKind trainer_from_string(const std::string& s) {
  if (s == "errl1") return TrainerKind::Errl1;
  if (s == "errl2") return TrainerKind::Errl2;
  throw DataError("unknown trainer '" + s + "' (expected errl1|errl2)");
}
BaselineKind baseline_from_string(const std::string& s) {
  if (s == "shared-mean") return BaselineKind::SharedMean;
  if (s == "greedy") return BaselineKind::GreedyRollout;
  if (s == "none") return BaselineKind::None;
  throw DataError("unknown baseline '" + s + "' (expected shared-mean|greedy|none)");
}
Precision precision_from_string(const std::string& s) {
  if (s == "float32" || s == "f32") return Precision::Float32;
  if (s == "float64" || s == "f64") return Precision::Float64;
  throw DataError("unknown precision '" + s + "' (expected float32|float64)");
}

void TrainConfig::validate() const {
  if (hyper.kind != kind) throw std::invalid_argument("hyper.kind out of sync with kind");
  hyper.validate();
  if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  if (lr <= 0) throw std::invalid_argument("lr must be positive");
  if (batch_size < 1 || epochs < 0 || steps_per_epoch < 1 || val_size < 1)
    throw std::invalid_argument("batch_size/epochs/steps_per_epoch/val_size out of range");
  if (trainer == TrainerKind::Errl1 && traj_per_instance < 2)
    throw std::invalid_argument("trainer errl1 needs traj_per_instance >= 2");
  if (grad_clip_norm <= 0) throw std::invalid_argument("grad_clip_norm must be positive");
  if (lr_decay && (lr_decay_factor <= 0 || lr_decay_factor > 1 || lr_decay_steps < 1))
    throw std::invalid_argument("bad lr decay settings");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  if (n < 2 && kind == ProblemKind::Tsp) throw std::invalid_argument("tsp needs n >= 2");
  if (n < 1 && kind != ProblemKind::Tsp) throw std::invalid_argument("need n >= 1 customers");
}

void TrainConfig::apply_config(const Config& file) {
  if (auto v = file.get("kind")) kind = problem_kind_from_string(*v);
  n = static_cast<int>(file.get_int("n", n));
  gen.capacity = static_cast<int>(file.get_int("capacity", gen.capacity));
  gen.num_routes = static_cast<int>(file.get_int("routes", gen.num_routes));
  hyper.embed_dim = static_cast<int>(file.get_int("embed_dim", hyper.embed_dim));
  hyper.num_layers = static_cast<int>(file.get_int("num_layers", hyper.num_layers));
  hyper.num_heads = static_cast<int>(file.get_int("num_heads", hyper.num_heads));
  hyper.ff_dim = static_cast<int>(file.get_int("ff_dim", hyper.ff_dim));
  hyper.logit_clip = file.get_double("logit_clip", hyper.logit_clip);
  if (auto v = file.get("trainer")) trainer = trainer_from_string(*v);
  if (auto v = file.get("baseline")) baseline = baseline_from_string(*v);
  entropy_in_reward = file.get_bool("entropy_in_reward", entropy_in_reward);
  alpha = file.get_double("alpha", alpha);
  lr = file.get_double("lr", lr);
  batch_size = static_cast<int>(file.get_int("batch_size", batch_size));
  traj_per_instance = static_cast<int>(file.get_int("traj_per_instance", traj_per_instance));
  epochs = static_cast<int>(file.get_int("epochs", epochs));
  steps_per_epoch = static_cast<int>(file.get_int("steps_per_epoch", steps_per_epoch));
  grad_clip_norm = file.get_double("grad_clip_norm", grad_clip_norm);
  lr_decay = file.get_bool("lr_decay", lr_decay);
  lr_decay_factor = file.get_double("lr_decay_factor", lr_decay_factor);
  lr_decay_steps = static_cast<int>(file.get_int("lr_decay_steps", lr_decay_steps));
  weight_decay = file.get_double("weight_decay", weight_decay);
  val_size = static_cast<int>(file.get_int("val_size", val_size));
  seed = static_cast<std::uint64_t>(file.get_int("seed", static_cast<long>(seed)));
  if (auto v = file.get("precision")) precision = precision_from_string(*v);
  if (auto v = file.get("out_dir")) out_dir = *v;
  threads = static_cast<int>(file.get_int("threads", threads));
  hyper.kind = kind;
}

TrainConfig TrainConfig::from_config(const Config& file) {
  TrainConfig c;
  c.apply_config(file);
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json j;
  j["version"] = ck.version;
  j["config"] = config_to_json(ck.config);
  j["params"] = vec_to_json(ck.params);
  j["adam_m"] = vec_to_json(ck.adam_m);
  j["adam_v"] = vec_to_json(ck.adam_v);
  j["adam_t"] = ck.adam_t;
  j["epochs_done"] = ck.epochs_done;
  j["global_step"] = ck.global_step;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp);
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  try {
    Checkpoint ck;
    ck.version = j.at("version").get<int>();
    if (ck.version != 1)
      throw DataError("unsupported checkpoint version " + std::to_string(ck.version));
    ck.config = config_from_json(j.at("config"));
    ck.params = vec_from_json(j.at("params"));
    ck.adam_m = vec_from_json(j.at("adam_m"));
    ck.adam_v = vec_from_json(j.at("adam_v"));
    ck.adam_t = j.at("adam_t").get<long>();
    ck.epochs_done = j.at("epochs_done").get<int>();
    ck.global_step = j.at("global_step").get<long>();
    const Eigen::Index np = ParamLayout(ck.config.hyper).total;
    if (ck.params.size() != np || ck.adam_m.size() != np || ck.adam_v.size() != np)
      throw DataError("checkpoint parameter count does not match its hyperparameters");
    return ck;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
}

double validation_mean_length(const TrainConfig& cfg, const Vecd& params_f64, int epoch) {
  TrainConfig c = cfg;
  c.hyper.kind = c.kind;
  const int threads = c.threads > 0 ? c.threads : thread_count();
  if (c.precision == Precision::Float32) {
    Driver<float> d(c);
    d.params = params_f64.cast<float>();
    return d.validate_epoch(epoch, threads);
  }
  Driver<double> d(c);
  d.params = params_f64;
  return d.validate_epoch(epoch, threads);
}

TrainReport train(const TrainConfig& cfg, const std::string& resume_from) {
  if (cfg.precision == Precision::Float32) return train_impl<float>(cfg, resume_from);
  return train_impl<double>(cfg, resume_from);
}

}  // namespace errl
