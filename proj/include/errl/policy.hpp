#pragma once

// Attention encoder-decoder construction policy with hand-written
// reverse-mode gradients. The same code runs in float (training speed) and
// double (gradient checks) via the scalar template parameter.
//
// Encoder: linear node embedding, then num_layers residual blocks of
// multi-head self-attention and a relu feed-forward, each in
// pre-normalized form  x + F(rmsnorm(x))  with a parameter-free rmsnorm.
// The graph embedding is the mean of the final node embeddings.
//
// Decoder (one step per action): context = [graph; first-node; last-node]
// embeddings (plus remaining-load or remaining-routes scalar where the
// problem has one), a multi-head glimpse over the node embeddings, then
// single-head pointer logits  u_j = clip * tanh(q . k_j / sqrt(d))  with
// infeasible actions masked to -inf before the softmax.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "errl/errors.hpp"
#include "errl/rng.hpp"
#include "errl/solution.hpp"
#include "errl/types.hpp"

namespace errl {

struct PolicyHyper {
  ProblemKind kind = ProblemKind::Tsp;
  int embed_dim = 128;
  int num_layers = 3;
  int num_heads = 8;
  int ff_dim = 512;
  double logit_clip = 10.0;  // tanh clipping constant for pointer logits

  int head_dim() const { return embed_dim / num_heads; }
  int critic_hidden() const { return embed_dim; }

  // Per-node input features: coordinates, plus a depot flag for depot
  // problems, plus normalized demand for CVRP.
  int input_dim() const {
    switch (kind) {
      case ProblemKind::Tsp: return 2;
      case ProblemKind::Mrpff: return 3;
      case ProblemKind::Cvrp: return 4;
    }
    return 2;
  }
  // Decoder context: [graph; first; last] plus one state scalar
  // (remaining load / remaining routes) for depot problems.
  int context_dim() const {
    return 3 * embed_dim + (kind == ProblemKind::Tsp ? 0 : 1);
  }

  void validate() const {
    if (embed_dim < 1 || num_layers < 0 || num_heads < 1 || ff_dim < 1)
      throw std::invalid_argument("policy hyperparameters must be positive");
    if (embed_dim % num_heads != 0)
      throw std::invalid_argument("embed_dim must be divisible by num_heads");
  }
};

// Offsets of every weight block inside the flat parameter vector.
// Matrices are out x in, stored column-major; y = W * x.
struct ParamLayout {
  struct LayerOffsets {
    int Wq, Wk, Wv, Wo;
    int ff_W1, ff_b1, ff_W2, ff_b2;
  };

  int embed_W = 0, embed_b = 0;
  std::vector<LayerOffsets> layers;
  int dec_Wctx = 0, dec_Wkg = 0, dec_Wvg = 0, dec_Wog = 0, dec_Wklog = 0;
  int v_first = -1, v_last = -1;  // TSP first-step context placeholders
  int critic_W1 = 0, critic_b1 = 0, critic_w2 = 0, critic_b2 = 0;
  int total = 0;

  explicit ParamLayout(const PolicyHyper& h) {
    const int D = h.embed_dim;
    auto alloc = [this](int count) {
      const int at = total;
      total += count;
      return at;
    };
    embed_W = alloc(D * h.input_dim());
    embed_b = alloc(D);
    layers.reserve(h.num_layers);
    for (int l = 0; l < h.num_layers; ++l) {
      LayerOffsets lo;
      lo.Wq = alloc(D * D);
      lo.Wk = alloc(D * D);
      lo.Wv = alloc(D * D);
      lo.Wo = alloc(D * D);
      lo.ff_W1 = alloc(h.ff_dim * D);
      lo.ff_b1 = alloc(h.ff_dim);
      lo.ff_W2 = alloc(D * h.ff_dim);
      lo.ff_b2 = alloc(D);
      layers.push_back(lo);
    }
    dec_Wctx = alloc(D * h.context_dim());
    dec_Wkg = alloc(D * D);
    dec_Wvg = alloc(D * D);
    dec_Wog = alloc(D * D);
    dec_Wklog = alloc(D * D);
    if (h.kind == ProblemKind::Tsp) {
      v_first = alloc(D);
      v_last = alloc(D);
    }
    critic_W1 = alloc(h.critic_hidden() * D);
    critic_b1 = alloc(h.critic_hidden());
    critic_w2 = alloc(h.critic_hidden());
    critic_b2 = alloc(1);
  }
};

enum class DecodeMode { Greedy, Sample };

// Mutable rollout cursor. `visited` covers customers only (the depot is
// re-enterable); sums are kept in double regardless of the model scalar.
struct DecodeState {
  std::vector<char> visited;
  int current = -1;             // -1 before the first TSP action
  int first = -1;               // first visited node (TSP context anchor)
  int remaining_load = 0;       // CVRP
  int separators_remaining = 0; // MRPFF depot returns still to place
  int customers_left = 0;
  int step = 0;
  double logprob_sum = 0.0;
  double entropy_sum = 0.0;

  bool done() const { return customers_left == 0; }
};

// One complete decoded sequence with its log-probability, summed per-step
// entropy (nats) and reward = -length.
struct Trajectory {
  Solution solution;
  double logprob = 0.0;
  double entropy = 0.0;
  double reward = 0.0;
  int num_steps() const { return static_cast<int>(solution.actions.size()); }
};

template <typename S>
struct EncoderLayerTape {
  MatX<S> h_in;               // sublayer input
  MatX<S> u;                  // rmsnorm(h_in)
  VecX<S> r1;                 // per-row rms of h_in
  MatX<S> Q, K, V, O;
  std::vector<MatX<S>> attn;  // per-head row-softmax weights (n x n)
  MatX<S> h_mid;              // after attention residual
  MatX<S> v;                  // rmsnorm(h_mid)
  VecX<S> r2;
  MatX<S> Z1;                 // ff pre-activation
};

template <typename S>
struct Encoded {
  MatX<S> h;        // n x D final node embeddings
  VecX<S> graph;    // mean over nodes
  MatX<S> Kg, Vg, Klog;  // decoder-side per-node projections
  MatX<S> x;        // n x input_dim raw features
  std::vector<EncoderLayerTape<S>> tape;  // empty when recorded without tape
};

template <typename S>
struct DecodeStepTape {
  std::vector<char> allowed;
  VecX<S> c, q, g, qf;
  MatX<S> attn;     // n x heads glimpse weights
  VecX<S> th;       // tanh of scaled pointer scores
  VecX<S> p;        // action probabilities (masked = 0)
  double entropy = 0.0;
  int action = -1;
  int first_idx = -1, last_idx = -1;  // -1 = learned placeholder (TSP step 0)
};

template <typename S>
using DecodeTape = std::vector<DecodeStepTape<S>>;

// Per-trajectory weights for the batched backward pass: the contribution of
// one taped trajectory is  coef_logp * d(logprob)/dtheta + coef_ent *
// d(sum step entropies)/dtheta.
template <typename S>
struct TrajectoryGrad {
  const DecodeTape<S>* tape = nullptr;
  double coef_logp = 0.0;
  double coef_ent = 0.0;
};

double entropy_nats(const Eigen::Ref<const Vecd>& probs);

template <typename S>
class PolicyNet {
 public:
  explicit PolicyNet(const PolicyHyper& hyper) : hyper_(hyper), layout_(hyper) {
    hyper_.validate();
  }

  const PolicyHyper& hyper() const { return hyper_; }
  const ParamLayout& layout() const { return layout_; }
  int num_params() const { return layout_.total; }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  VecX<S> init_params(std::uint64_t seed) const;

  // Throws NumericalError if any parameter is NaN/Inf.
  void check_finite(const VecX<S>& params, const std::string& where) const;

  Encoded<S> encode(const Instance& inst, const VecX<S>& params, bool with_tape) const;

  DecodeState initial_state(const Instance& inst) const;
  std::vector<char> step_mask(const Instance& inst, const DecodeState& state) const;

  // Per-action log-probabilities for the current state (-inf where masked).
  VecX<S> step_logprobs(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                        const DecodeState& state) const;

  // Advances the state by one chosen action, adding (logp, ent) to the sums.
  void advance(const Instance& inst, DecodeState& state, int action, double logp,
               double ent) const;

  // One decode step: picks an action (sampled / greedy / forced), updates
  // `state` and optionally appends to `tape`. Returns the action.
  int decode_step(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                  DecodeState& state, DecodeMode mode, Rng* rng, DecodeTape<S>* tape,
                  int forced_action = -1) const;

  Trajectory rollout(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                     DecodeMode mode, Rng* rng, DecodeTape<S>* tape = nullptr) const;

  // Teacher-forced evaluation of a fixed action sequence.
  // Throws std::invalid_argument if an action violates the mask.
  std::pair<double, double> score(const Instance& inst, const VecX<S>& params,
                                  const Encoded<S>& enc, const std::vector<int>& actions,
                                  DecodeTape<S>* tape = nullptr) const;

  double critic_value(const Instance& inst, const VecX<S>& params,
                      const Encoded<S>& enc) const;

  // Reverse pass for one instance: decoder gradients for every taped
  // trajectory, then one encoder backward. `critic_coef` = dObjective/dV
  // (critic gradients stay in the head; they do not flow into the encoder).
  // Requires enc recorded with_tape. Adds into `grad`.
  void accumulate_gradient(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                           const std::vector<TrajectoryGrad<S>>& trajectories,
                           double critic_coef, VecX<S>& grad) const;

 private:
  using CMap = Eigen::Map<const MatX<S>>;
  using MMap = Eigen::Map<MatX<S>>;
  using CVMap = Eigen::Map<const VecX<S>>;
  using VMap = Eigen::Map<VecX<S>>;

  CMap mat(const VecX<S>& p, int off, int rows, int cols) const {
    return CMap(p.data() + off, rows, cols);
  }
  CVMap vec(const VecX<S>& p, int off, int len) const { return CVMap(p.data() + off, len); }
  MMap mat(VecX<S>& p, int off, int rows, int cols) const {
    return MMap(p.data() + off, rows, cols);
  }
  VMap vec(VecX<S>& p, int off, int len) const { return VMap(p.data() + off, len); }

  MatX<S> node_features(const Instance& inst) const;
  VecX<S> context_vector(const Instance& inst, const Encoded<S>& enc, const DecodeState& state,
                         const VecX<S>& params, int* first_idx, int* last_idx) const;

  // Forward for one decode step; fills the tape record.
  void eval_step(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                 const DecodeState& state, DecodeStepTape<S>& rec, VecX<S>& logp) const;

  void encoder_backward(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                        MatX<S>& dH, VecX<S>& dgraph, VecX<S>& grad) const;

  PolicyHyper hyper_;
  ParamLayout layout_;
};

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

inline double entropy_nats(const Eigen::Ref<const Vecd>& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return h;
}

namespace detail {

constexpr double kRmsEps = 1e-8;

// y_i = x_i / sqrt(mean(x^2) + eps), applied per row. Returns per-row rms.
template <typename S>
VecX<S> rmsnorm_rows(const MatX<S>& x, MatX<S>& y) {
  const auto n = x.rows();
  const auto d = static_cast<S>(x.cols());
  VecX<S> r(n);
  y.resize(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    r[i] = std::sqrt(x.row(i).squaredNorm() / d + static_cast<S>(kRmsEps));
    y.row(i) = x.row(i) / r[i];
  }
  return r;
}

// dx for y = x / r given upstream g, using the stored y and r.
template <typename S>
void rmsnorm_backward_rows(const MatX<S>& g, const MatX<S>& y, const VecX<S>& r, MatX<S>& dx) {
  const auto d = static_cast<S>(y.cols());
  dx.resize(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const S gy = g.row(i).dot(y.row(i));
    dx.row(i) = (g.row(i) - y.row(i) * (gy / d)) / r[i];
  }
}

template <typename S>
void softmax_rows_inplace(MatX<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const S mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace detail

template <typename S>
VecX<S> PolicyNet<S>::init_params(std::uint64_t seed) const {
  VecX<S> p = VecX<S>::Zero(layout_.total);
  Rng rng = make_rng(mix_seed(seed, 0x494e4954u));  // "INIT"
  auto fill = [&rng, &p](int off, int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int k = 0; k < rows * cols; ++k)
      p[off + k] = static_cast<S>(uniform(rng, -bound, bound));
  };
  const int D = hyper_.embed_dim;
  fill(layout_.embed_W, D, hyper_.input_dim());
  for (const auto& lo : layout_.layers) {
    fill(lo.Wq, D, D);
    fill(lo.Wk, D, D);
    fill(lo.Wv, D, D);
    fill(lo.Wo, D, D);
    fill(lo.ff_W1, hyper_.ff_dim, D);
    fill(lo.ff_W2, D, hyper_.ff_dim);
  }
  fill(layout_.dec_Wctx, D, hyper_.context_dim());
  fill(layout_.dec_Wkg, D, D);
  fill(layout_.dec_Wvg, D, D);
  fill(layout_.dec_Wog, D, D);
  fill(layout_.dec_Wklog, D, D);
  if (layout_.v_first >= 0) {
    fill(layout_.v_first, D, 1);
    fill(layout_.v_last, D, 1);
  }
  fill(layout_.critic_W1, hyper_.critic_hidden(), D);
  fill(layout_.critic_w2, hyper_.critic_hidden(), 1);
  return p;
}

template <typename S>
void PolicyNet<S>::check_finite(const VecX<S>& params, const std::string& where) const {
  if (!params.allFinite())
    throw NumericalError("non-finite parameters detected: " + where);
}

template <typename S>
MatX<S> PolicyNet<S>::node_features(const Instance& inst) const {
  const int n = inst.num_nodes();
  MatX<S> x = MatX<S>::Zero(n, hyper_.input_dim());
  x.col(0) = inst.nodes.col(0).template cast<S>();
  x.col(1) = inst.nodes.col(1).template cast<S>();
  if (inst.has_depot()) x(inst.depot, 2) = S(1);
  if (inst.kind == ProblemKind::Cvrp) {
    const S cap = static_cast<S>(inst.capacity);
    for (int i = 0; i < n; ++i) x(i, 3) = static_cast<S>(inst.demands[i]) / cap;
  }
  return x;
}

template <typename S>
Encoded<S> PolicyNet<S>::encode(const Instance& inst, const VecX<S>& params,
                                bool with_tape) const {
  if (params.size() != layout_.total)
    throw std::invalid_argument("parameter vector size " + std::to_string(params.size()) +
                                " does not match layout size " + std::to_string(layout_.total));
  const int n = inst.num_nodes();
  const int D = hyper_.embed_dim;
  const int H = hyper_.num_heads;
  const int dh = hyper_.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

  Encoded<S> enc;
  enc.x = node_features(inst);
  MatX<S> h = enc.x * mat(params, layout_.embed_W, D, hyper_.input_dim()).transpose();
  h.rowwise() += vec(params, layout_.embed_b, D).transpose();
  if (with_tape) enc.tape.resize(hyper_.num_layers);

  for (int l = 0; l < hyper_.num_layers; ++l) {
    const auto& lo = layout_.layers[l];
    EncoderLayerTape<S> local;
    EncoderLayerTape<S>& t = with_tape ? enc.tape[l] : local;

    t.h_in = h;
    t.r1 = detail::rmsnorm_rows(t.h_in, t.u);
    t.Q.noalias() = t.u * mat(params, lo.Wq, D, D).transpose();
    t.K.noalias() = t.u * mat(params, lo.Wk, D, D).transpose();
    t.V.noalias() = t.u * mat(params, lo.Wv, D, D).transpose();
    t.O.resize(n, D);
    t.attn.resize(H);
    for (int hh = 0; hh < H; ++hh) {
      MatX<S>& A = t.attn[hh];
      A.noalias() = t.Q.middleCols(hh * dh, dh) * t.K.middleCols(hh * dh, dh).transpose();
      A *= inv_sqrt_dh;
      detail::softmax_rows_inplace(A);
      t.O.middleCols(hh * dh, dh).noalias() = A * t.V.middleCols(hh * dh, dh);
    }
    t.h_mid = t.h_in + t.O * mat(params, lo.Wo, D, D).transpose();

    t.r2 = detail::rmsnorm_rows(t.h_mid, t.v);
    t.Z1.noalias() = t.v * mat(params, lo.ff_W1, hyper_.ff_dim, D).transpose();
    t.Z1.rowwise() += vec(params, lo.ff_b1, hyper_.ff_dim).transpose();
    MatX<S> ff = t.Z1.cwiseMax(S(0)) * mat(params, lo.ff_W2, D, hyper_.ff_dim).transpose();
    ff.rowwise() += vec(params, lo.ff_b2, D).transpose();
    h = t.h_mid + ff;
  }

  enc.h = std::move(h);
  enc.graph = enc.h.colwise().mean().transpose();
  enc.Kg.noalias() = enc.h * mat(params, layout_.dec_Wkg, D, D).transpose();
  enc.Vg.noalias() = enc.h * mat(params, layout_.dec_Wvg, D, D).transpose();
  enc.Klog.noalias() = enc.h * mat(params, layout_.dec_Wklog, D, D).transpose();
  return enc;
}

template <typename S>
DecodeState PolicyNet<S>::initial_state(const Instance& inst) const {
  DecodeState st;
  st.visited.assign(inst.num_nodes(), 0);
  st.customers_left = inst.num_customers();
  if (inst.has_depot()) {
    st.current = inst.depot;
    st.first = inst.depot;
  }
  if (inst.kind == ProblemKind::Cvrp) st.remaining_load = inst.capacity;
  if (inst.kind == ProblemKind::Mrpff) st.separators_remaining = inst.num_routes - 1;
  return st;
}

template <typename S>
std::vector<char> PolicyNet<S>::step_mask(const Instance& inst, const DecodeState& st) const {
  const int n = inst.num_nodes();
  std::vector<char> allowed(n, 0);
  switch (inst.kind) {
    case ProblemKind::Tsp:
      for (int j = 0; j < n; ++j) allowed[j] = !st.visited[j];
      break;
    case ProblemKind::Cvrp:
      for (int j = 0; j < n; ++j) {
        if (j == inst.depot)
          allowed[j] = st.current != inst.depot;
        else
          allowed[j] = !st.visited[j] && inst.demands[j] <= st.remaining_load;
      }
      break;
    case ProblemKind::Mrpff:
      // Each not-yet-started route still needs at least one customer, so a
      // customer is takeable only while customers outnumber the remaining
      // depot separators.
      for (int j = 0; j < n; ++j) {
        if (j == inst.depot)
          allowed[j] = st.current != inst.depot && st.separators_remaining >= 1;
        else
          allowed[j] = !st.visited[j] && st.customers_left >= st.separators_remaining + 1;
      }
      break;
  }
  return allowed;
}

template <typename S>
void PolicyNet<S>::advance(const Instance& inst, DecodeState& st, int action, double logp,
                           double ent) const {
  if (inst.has_depot() && action == inst.depot) {
    if (inst.kind == ProblemKind::Cvrp) st.remaining_load = inst.capacity;
    if (inst.kind == ProblemKind::Mrpff) --st.separators_remaining;
  } else {
    st.visited[action] = 1;
    --st.customers_left;
    if (inst.kind == ProblemKind::Cvrp) st.remaining_load -= inst.demands[action];
  }
  if (st.first < 0) st.first = action;
  st.current = action;
  ++st.step;
  st.logprob_sum += logp;
  st.entropy_sum += ent;
}

template <typename S>
VecX<S> PolicyNet<S>::context_vector(const Instance& inst, const Encoded<S>& enc,
                                     const DecodeState& st, const VecX<S>& params,
                                     int* first_idx, int* last_idx) const {
  const int D = hyper_.embed_dim;
  VecX<S> c(hyper_.context_dim());
  c.head(D) = enc.graph;
  *first_idx = st.first;
  *last_idx = st.current;
  if (st.first >= 0)
    c.segment(D, D) = enc.h.row(st.first).transpose();
  else
    c.segment(D, D) = vec(params, layout_.v_first, D);
  if (st.current >= 0)
    c.segment(2 * D, D) = enc.h.row(st.current).transpose();
  else
    c.segment(2 * D, D) = vec(params, layout_.v_last, D);
  if (inst.kind == ProblemKind::Cvrp)
    c[3 * D] = static_cast<S>(st.remaining_load) / static_cast<S>(inst.capacity);
  else if (inst.kind == ProblemKind::Mrpff)
    c[3 * D] = static_cast<S>(st.separators_remaining) / static_cast<S>(inst.num_routes);
  return c;
}

template <typename S>
void PolicyNet<S>::eval_step(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                             const DecodeState& st, DecodeStepTape<S>& rec,
                             VecX<S>& logp) const {
  const int n = inst.num_nodes();
  const int D = hyper_.embed_dim;
  const int H = hyper_.num_heads;
  const int dh = hyper_.head_dim();
  constexpr S kNegInf = -std::numeric_limits<S>::infinity();

  rec.allowed = step_mask(inst, st);
  int num_allowed = 0;
  for (char a : rec.allowed) num_allowed += a;
  if (num_allowed == 0)
    throw NumericalError("decode dead-end: every action masked (invalid instance state)");

  rec.c = context_vector(inst, enc, st, params, &rec.first_idx, &rec.last_idx);
  rec.q.noalias() = mat(params, layout_.dec_Wctx, D, hyper_.context_dim()) * rec.c;

  // Multi-head glimpse over the node embeddings, masked like the logits.
  rec.attn.resize(n, H);
  rec.g.resize(D);
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  for (int hh = 0; hh < H; ++hh) {
    VecX<S> s(n);
    s.noalias() = enc.Kg.middleCols(hh * dh, dh) * rec.q.segment(hh * dh, dh);
    s *= inv_sqrt_dh;
    S mx = kNegInf;
    for (int j = 0; j < n; ++j)
      if (rec.allowed[j]) mx = std::max(mx, s[j]);
    S z = S(0);
    for (int j = 0; j < n; ++j) {
      const S e = rec.allowed[j] ? std::exp(s[j] - mx) : S(0);
      rec.attn(j, hh) = e;
      z += e;
    }
    rec.attn.col(hh) /= z;
    rec.g.segment(hh * dh, dh).noalias() =
        enc.Vg.middleCols(hh * dh, dh).transpose() * rec.attn.col(hh);
  }
  rec.qf.noalias() = mat(params, layout_.dec_Wog, D, D) * rec.g;

  // Pointer logits with tanh clipping; masked entries -> -inf.
  const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(D));
  rec.th = ((enc.Klog * rec.qf) * inv_sqrt_d).array().tanh();
  const S clip = static_cast<S>(hyper_.logit_clip);
  VecX<S> u(n);
  for (int j = 0; j < n; ++j) u[j] = rec.allowed[j] ? clip * rec.th[j] : kNegInf;

  S mx = kNegInf;
  for (int j = 0; j < n; ++j)
    if (rec.allowed[j]) mx = std::max(mx, u[j]);
  S z = S(0);
  rec.p = VecX<S>::Zero(n);
  for (int j = 0; j < n; ++j)
    if (rec.allowed[j]) {
      rec.p[j] = std::exp(u[j] - mx);
      z += rec.p[j];
    }
  rec.p /= z;
  const S logz = std::log(z);
  logp.resize(n);
  double ent = 0.0;
  for (int j = 0; j < n; ++j) {
    if (rec.allowed[j]) {
      logp[j] = u[j] - mx - logz;
      ent -= static_cast<double>(rec.p[j]) * static_cast<double>(logp[j]);
    } else {
      logp[j] = kNegInf;
    }
  }
  rec.entropy = ent;
}

template <typename S>
VecX<S> PolicyNet<S>::step_logprobs(const Instance& inst, const VecX<S>& params,
                                    const Encoded<S>& enc, const DecodeState& state) const {
  DecodeStepTape<S> rec;
  VecX<S> logp;
  eval_step(inst, params, enc, state, rec, logp);
  return logp;
}

template <typename S>
int PolicyNet<S>::decode_step(const Instance& inst, const VecX<S>& params, const Encoded<S>& enc,
                              DecodeState& state, DecodeMode mode, Rng* rng,
                              DecodeTape<S>* tape, int forced_action) const {
  DecodeStepTape<S> rec;
  VecX<S> logp;
  eval_step(inst, params, enc, state, rec, logp);
  const int n = inst.num_nodes();

  int action = -1;
  if (forced_action >= 0) {
    if (forced_action >= n || !rec.allowed[forced_action])
      throw std::invalid_argument("forced action " + std::to_string(forced_action) +
                                  " violates the feasibility mask at step " +
                                  std::to_string(state.step));
    action = forced_action;
  } else if (mode == DecodeMode::Greedy) {
    // argmax of the step log-probabilities, ties to the lowest index; beam
    // search ranks candidates by the same quantity.
    S best = -std::numeric_limits<S>::infinity();
    for (int j = 0; j < n; ++j)
      if (rec.allowed[j] && logp[j] > best) {
        best = logp[j];
        action = j;
      }
  } else {
    const S r = static_cast<S>(uniform01(*rng));
    S cum = S(0);
    for (int j = 0; j < n; ++j) {
      if (!rec.allowed[j]) continue;
      cum += rec.p[j];
      action = j;
      if (r < cum) break;  // falls through to the last unmasked on rounding
    }
  }

  advance(inst, state, action, static_cast<double>(logp[action]), rec.entropy);
  rec.action = action;
  if (tape) tape->push_back(std::move(rec));
  return action;
}

template <typename S>
Trajectory PolicyNet<S>::rollout(const Instance& inst, const VecX<S>& params,
                                 const Encoded<S>& enc, DecodeMode mode, Rng* rng,
                                 DecodeTape<S>* tape) const {
  DecodeState st = initial_state(inst);
  std::vector<int> actions;
  actions.reserve(inst.num_nodes() + std::max(0, inst.num_routes - 1));
  while (!st.done()) actions.push_back(decode_step(inst, params, enc, st, mode, rng, tape));

  Trajectory traj;
  traj.solution = make_solution(inst, std::move(actions));
  traj.logprob = st.logprob_sum;
  traj.entropy = st.entropy_sum;
  traj.reward = -traj.solution.total_length;
  return traj;
}

template <typename S>
std::pair<double, double> PolicyNet<S>::score(const Instance& inst, const VecX<S>& params,
                                              const Encoded<S>& enc,
                                              const std::vector<int>& actions,
                                              DecodeTape<S>* tape) const {
  DecodeState st = initial_state(inst);
  for (int a : actions) {
    if (st.done())
      throw std::invalid_argument("action sequence continues past a complete solution");
    decode_step(inst, params, enc, st, DecodeMode::Greedy, nullptr, tape, a);
  }
  if (!st.done()) throw std::invalid_argument("action sequence ends before the solution is complete");
  return {st.logprob_sum, st.entropy_sum};
}

template <typename S>
double PolicyNet<S>::critic_value(const Instance& inst, const VecX<S>& params,
                                  const Encoded<S>& enc) const {
  (void)inst;
  const int Hc = hyper_.critic_hidden();
  const int D = hyper_.embed_dim;
  VecX<S> z = mat(params, layout_.critic_W1, Hc, D) * enc.graph +
              vec(params, layout_.critic_b1, Hc);
  return static_cast<double>(vec(params, layout_.critic_w2, Hc).dot(z.cwiseMax(S(0))) +
                             params[layout_.critic_b2]);
}

template <typename S>
void PolicyNet<S>::accumulate_gradient(const Instance& inst, const VecX<S>& params,
                                       const Encoded<S>& enc,
                                       const std::vector<TrajectoryGrad<S>>& trajectories,
                                       double critic_coef, VecX<S>& grad) const {
  if (enc.tape.empty() && hyper_.num_layers > 0)
    throw std::invalid_argument("accumulate_gradient requires an encoding recorded with tape");
  if (grad.size() != layout_.total) {
    grad = VecX<S>::Zero(layout_.total);
  }
  const int n = inst.num_nodes();
  const int D = hyper_.embed_dim;
  const int H = hyper_.num_heads;
  const int dh = hyper_.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(D));
  const S clip = static_cast<S>(hyper_.logit_clip);

  MatX<S> dH = MatX<S>::Zero(n, D);
  MatX<S> dKg = MatX<S>::Zero(n, D);
  MatX<S> dVg = MatX<S>::Zero(n, D);
  MatX<S> dKlog = MatX<S>::Zero(n, D);
  VecX<S> dgraph = VecX<S>::Zero(D);

  auto dWctx = mat(grad, layout_.dec_Wctx, D, hyper_.context_dim());
  auto dWog = mat(grad, layout_.dec_Wog, D, D);
  const auto Wctx = mat(params, layout_.dec_Wctx, D, hyper_.context_dim());
  const auto Wog = mat(params, layout_.dec_Wog, D, D);

  for (const auto& tg : trajectories) {
    if (!tg.tape) continue;
    for (auto it = tg.tape->rbegin(); it != tg.tape->rend(); ++it) {
      const DecodeStepTape<S>& rec = *it;
      // d(objective)/d(logits): coef_logp * (e_a - p) from the chosen
      // log-prob, coef_ent * (-p (ln p + H)) from the step entropy.
      VecX<S> du = VecX<S>::Zero(n);
      const S cl = static_cast<S>(tg.coef_logp);
      const S ce = static_cast<S>(tg.coef_ent);
      const S ent = static_cast<S>(rec.entropy);
      for (int j = 0; j < n; ++j) {
        if (!rec.allowed[j]) continue;
        const S pj = rec.p[j];
        S v = -cl * pj;
        if (j == rec.action) v += cl;
        if (ce != S(0) && pj > S(0)) v -= ce * pj * (std::log(pj) + ent);
        du[j] = v;
      }

      // Pointer logits u_j = clip * tanh(Klog_j . qf / sqrt(D)).
      VecX<S> dt(n);
      for (int j = 0; j < n; ++j)
        dt[j] = rec.allowed[j] ? du[j] * clip * (S(1) - rec.th[j] * rec.th[j]) * inv_sqrt_d
                               : S(0);
      VecX<S> dqf = enc.Klog.transpose() * dt;
      dKlog.noalias() += dt * rec.qf.transpose();

      // qf = Wog * g
      dWog.noalias() += dqf * rec.g.transpose();
      VecX<S> dg = Wog.transpose() * dqf;

      // Glimpse heads: g_h = Vg_h^T a_h, a_h = softmax(Kg_h q_h / sqrt(dh)).
      VecX<S> dq(D);
      for (int hh = 0; hh < H; ++hh) {
        const auto Vg_h = enc.Vg.middleCols(hh * dh, dh);
        const auto Kg_h = enc.Kg.middleCols(hh * dh, dh);
        const auto a = rec.attn.col(hh);
        const auto dg_h = dg.segment(hh * dh, dh);
        VecX<S> da = Vg_h * dg_h;
        dVg.middleCols(hh * dh, dh).noalias() += a * dg_h.transpose();
        const S adot = a.dot(da);
        VecX<S> ds = a.cwiseProduct((da.array() - adot).matrix());
        dq.segment(hh * dh, dh).noalias() = Kg_h.transpose() * ds * inv_sqrt_dh;
        dKg.middleCols(hh * dh, dh).noalias() +=
            ds * (rec.q.segment(hh * dh, dh).transpose() * inv_sqrt_dh);
      }

      // q = Wctx * c
      dWctx.noalias() += dq * rec.c.transpose();
      VecX<S> dc = Wctx.transpose() * dq;
      dgraph += dc.head(D);
      if (rec.first_idx >= 0)
        dH.row(rec.first_idx) += dc.segment(D, D).transpose();
      else
        vec(grad, layout_.v_first, D) += dc.segment(D, D);
      if (rec.last_idx >= 0)
        dH.row(rec.last_idx) += dc.segment(2 * D, D).transpose();
      else
        vec(grad, layout_.v_last, D) += dc.segment(2 * D, D);
    }
  }

  // Critic head (gradient confined to the head; dgraph untouched).
  if (critic_coef != 0.0) {
    const int Hc = hyper_.critic_hidden();
    VecX<S> z = mat(params, layout_.critic_W1, Hc, D) * enc.graph +
                vec(params, layout_.critic_b1, Hc);
    const S coef = static_cast<S>(critic_coef);
    vec(grad, layout_.critic_w2, Hc) += coef * z.cwiseMax(S(0));
    grad[layout_.critic_b2] += coef;
    VecX<S> dz = coef * vec(params, layout_.critic_w2, Hc);
    for (int k = 0; k < Hc; ++k)
      if (z[k] <= S(0)) dz[k] = S(0);
    mat(grad, layout_.critic_W1, Hc, D).noalias() += dz * enc.graph.transpose();
    vec(grad, layout_.critic_b1, Hc) += dz;
  }

  // Fold the decoder-side per-node projections back into dH and the weights.
  mat(grad, layout_.dec_Wkg, D, D).noalias() += dKg.transpose() * enc.h;
  mat(grad, layout_.dec_Wvg, D, D).noalias() += dVg.transpose() * enc.h;
  mat(grad, layout_.dec_Wklog, D, D).noalias() += dKlog.transpose() * enc.h;
  dH.noalias() += dKg * mat(params, layout_.dec_Wkg, D, D);
  dH.noalias() += dVg * mat(params, layout_.dec_Wvg, D, D);
  dH.noalias() += dKlog * mat(params, layout_.dec_Wklog, D, D);

  encoder_backward(inst, params, enc, dH, dgraph, grad);
}

template <typename S>
void PolicyNet<S>::encoder_backward(const Instance& inst, const VecX<S>& params,
                                    const Encoded<S>& enc, MatX<S>& dH, VecX<S>& dgraph,
                                    VecX<S>& grad) const {
  const int n = inst.num_nodes();
  const int D = hyper_.embed_dim;
  const int H = hyper_.num_heads;
  const int dh = hyper_.head_dim();
  const int F = hyper_.ff_dim;
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

  // Graph embedding = column mean of the final node embeddings.
  dH.rowwise() += (dgraph / static_cast<S>(n)).transpose();

  MatX<S> dh_cur = std::move(dH);
  for (int l = hyper_.num_layers - 1; l >= 0; --l) {
    const auto& lo = layout_.layers[l];
    const EncoderLayerTape<S>& t = enc.tape[l];

    // Feed-forward sublayer: h_out = h_mid + relu(v W1^T + b1) W2^T + b2.
    MatX<S> Z2 = t.Z1.cwiseMax(S(0));
    mat(grad, lo.ff_W2, D, F).noalias() += dh_cur.transpose() * Z2;
    vec(grad, lo.ff_b2, D) += dh_cur.colwise().sum().transpose();
    MatX<S> dZ1 = dh_cur * mat(params, lo.ff_W2, D, F);
    dZ1 = (t.Z1.array() > S(0)).select(dZ1, S(0));
    mat(grad, lo.ff_W1, F, D).noalias() += dZ1.transpose() * t.v;
    vec(grad, lo.ff_b1, F) += dZ1.colwise().sum().transpose();
    MatX<S> dv = dZ1 * mat(params, lo.ff_W1, F, D);
    MatX<S> dmid;
    detail::rmsnorm_backward_rows(dv, t.v, t.r2, dmid);
    dmid += dh_cur;

    // Attention sublayer: h_mid = h_in + O Wo^T.
    mat(grad, lo.Wo, D, D).noalias() += dmid.transpose() * t.O;
    MatX<S> dO = dmid * mat(params, lo.Wo, D, D);
    MatX<S> dQ(n, D), dK(n, D), dV(n, D);
    for (int hh = 0; hh < H; ++hh) {
      const auto Vh = t.V.middleCols(hh * dh, dh);
      const auto Qh = t.Q.middleCols(hh * dh, dh);
      const auto Kh = t.K.middleCols(hh * dh, dh);
      const MatX<S>& A = t.attn[hh];
      const auto dOh = dO.middleCols(hh * dh, dh);
      dV.middleCols(hh * dh, dh).noalias() = A.transpose() * dOh;
      MatX<S> dA = dOh * Vh.transpose();
      // Row-softmax backward: ds = a .* (da - sum(a .* da)).
      for (int i = 0; i < n; ++i) {
        const S dot = A.row(i).dot(dA.row(i));
        dA.row(i) = A.row(i).cwiseProduct((dA.row(i).array() - dot).matrix());
      }
      dQ.middleCols(hh * dh, dh).noalias() = dA * Kh * inv_sqrt_dh;
      dK.middleCols(hh * dh, dh).noalias() = dA.transpose() * Qh * inv_sqrt_dh;
    }
    mat(grad, lo.Wq, D, D).noalias() += dQ.transpose() * t.u;
    mat(grad, lo.Wk, D, D).noalias() += dK.transpose() * t.u;
    mat(grad, lo.Wv, D, D).noalias() += dV.transpose() * t.u;
    MatX<S> du = dQ * mat(params, lo.Wq, D, D);
    du.noalias() += dK * mat(params, lo.Wk, D, D);
    du.noalias() += dV * mat(params, lo.Wv, D, D);
    MatX<S> dh_in;
    detail::rmsnorm_backward_rows(du, t.u, t.r1, dh_in);
    dh_cur = dmid + dh_in;
  }

  // Input embedding: h0 = X embed_W^T + b.
  mat(grad, layout_.embed_W, D, hyper_.input_dim()).noalias() += dh_cur.transpose() * enc.x;
  vec(grad, layout_.embed_b, D) += dh_cur.colwise().sum().transpose();
}

}  // namespace errl
