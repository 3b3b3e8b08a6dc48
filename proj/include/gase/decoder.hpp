#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gase/encoder.hpp"
#include "gase/instance.hpp"
#include "gase/model.hpp"
#include "gase/rng.hpp"
#include "gase/tensor.hpp"

namespace gase {

// Dynamic state of the autoregressive construction.
struct DecoderState {
  int t = 1;
  std::vector<std::uint8_t> visited;   // per node; depot entry unused
  std::vector<double> remaining_demand;
  double remaining_capacity = 0.0;
  int last_node = 0;
  std::vector<int> partial{0};  // grows from the depot

  static DecoderState initial(const VrpInstance& inst) {
    DecoderState s;
    s.visited.assign(inst.num_nodes(), 0);
    s.remaining_demand = inst.demands;
    s.remaining_capacity = inst.capacity;
    return s;
  }

  bool all_served() const {
    for (std::size_t i = 1; i < visited.size(); ++i)
      if (!visited[i]) return false;
    return true;
  }
};

// Feasible-action mask (1 = allowed). Customer i allowed iff unvisited and
// its remaining demand fits the vehicle; the depot is blocked at t=1 and
// right after a depot visit (no consecutive depot visits).
inline std::vector<std::uint8_t> feasibility_mask(const DecoderState& s) {
  std::vector<std::uint8_t> mask(s.visited.size(), 0);
  mask[0] = (s.t > 1 && s.last_node != 0) ? 1 : 0;
  for (std::size_t i = 1; i < mask.size(); ++i)
    mask[i] = (!s.visited[i] &&
               s.remaining_demand[i] <= s.remaining_capacity + 1e-9)
                  ? 1
                  : 0;
  return mask;
}

// Applies a chosen (feasible) action: serving a customer zeroes its demand
// and reduces capacity; visiting the depot refills to Q.
inline DecoderState step(const DecoderState& s, int chosen,
                         const VrpInstance& inst) {
  auto mask = feasibility_mask(s);
  if (chosen < 0 || chosen >= static_cast<int>(mask.size()) || !mask[chosen])
    throw ContractError("decoder step: chosen node " + std::to_string(chosen) +
                        " is infeasible");
  DecoderState next = s;
  if (chosen == 0) {
    next.remaining_capacity = inst.capacity;
  } else {
    next.remaining_capacity -= next.remaining_demand[chosen];
    next.remaining_demand[chosen] = 0.0;
    next.visited[chosen] = 1;
  }
  next.last_node = chosen;
  next.partial.push_back(chosen);
  ++next.t;
  return next;
}

template <typename T>
struct DecoderOutputs {
  Tensor<T> context;  // c_t^s after multi-head aggregation
  Tensor<T> probs;    // 1 x (n+1)
};

// Per-rollout precomputation: projections of the node embeddings that do not
// change across decoding steps.
template <typename T>
struct DecoderCache {
  EncoderOutput<T> enc;
  std::vector<Tensor<T>> k_heads;  // per head, (n+1) x d_h
  std::vector<Tensor<T>> v_heads;
  Tensor<T> k_single;              // (n+1) x d_x

  DecoderCache(const EncoderOutput<T>& enc_out, Model<T>& model)
      : enc(enc_out) {
    int d = model.cfg.d_x;
    int heads = model.cfg.heads;
    if (d % heads != 0)
      throw ContractError("d_x must be divisible by the head count");
    int dh = d / heads;
    auto kp = matmul_nt(enc.node_embed, model.p("dec.mha.Wk"));
    auto vp = matmul_nt(enc.node_embed, model.p("dec.mha.Wv"));
    for (int h = 0; h < heads; ++h) {
      k_heads.push_back(slice_cols(kp, h * dh, (h + 1) * dh));
      v_heads.push_back(slice_cols(vp, h * dh, (h + 1) * dh));
    }
    k_single = matmul_nt(enc.node_embed, model.p("dec.sh.Wk"));
  }
};

// Context vector c_t^m: graph readout, embedding of the depot (t=1) or the
// previously chosen node, and the normalized remaining capacity Q_t/Q.
template <typename T>
Tensor<T> build_context(const EncoderOutput<T>& enc, const DecoderState& s,
                        const VrpInstance& inst, Model<T>& model) {
  auto h_last = row(enc.node_embed, s.t == 1 ? 0 : s.last_node);
  auto q_t = Tensor<T>::scalar(
      static_cast<T>(s.remaining_capacity / inst.capacity));
  auto cat = concat_cols<T>({enc.graph_readout, h_last, q_t});
  return matmul_nt(cat, model.p("dec.Wc"));
}

// Multi-head attention over node embeddings with the feasibility mask
// applied before each softmax; heads concatenated and merged by W_m.
template <typename T>
Tensor<T> mha_context(const Tensor<T>& c_m, const DecoderCache<T>& cache,
                      const std::vector<std::uint8_t>& mask, Model<T>& model) {
  int d = model.cfg.d_x;
  int heads = model.cfg.heads;
  int dh = d / heads;
  T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  auto q = matmul_nt(c_m, model.p("dec.mha.Wq"));  // 1 x d
  std::vector<Tensor<T>> parts;
  parts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto scores = scale(matmul_nt(qh, cache.k_heads[h]), inv_sqrt);  // 1 x n+1
    auto attn = softmax_rows_masked(scores, &mask);
    parts.push_back(matmul(attn, cache.v_heads[h]));  // 1 x dh
  }
  return matmul_nt(concat_cols(parts), model.p("dec.mha.Wm"));
}

// Single-head scoring: u_i = C tanh(<W_q'' c, W_k'' h_i>/sqrt(d_x)), masked,
// softmax -> selection probabilities.
template <typename T>
Tensor<T> score_nodes(const Tensor<T>& c_s, const DecoderCache<T>& cache,
                      const std::vector<std::uint8_t>& mask, Model<T>& model) {
  T inv_sqrt = T(1) / std::sqrt(static_cast<T>(model.cfg.d_x));
  auto q = matmul_nt(c_s, model.p("dec.sh.Wq"));
  auto u = scale(tanh_op(scale(matmul_nt(q, cache.k_single), inv_sqrt)),
                 static_cast<T>(model.cfg.clip));
  return softmax_rows_masked(u, &mask);
}

enum class RolloutMode { Greedy, Sample };

template <typename T>
struct RolloutResult {
  Solution solution;
  Tensor<T> log_prob;            // scalar, sum over chosen actions
  std::vector<int> actions;      // chosen nodes, excluding the leading depot
  std::vector<double> step_probs;  // probability of each chosen action
};

namespace detail {

// Core loop with a pluggable action selector. The selector receives the
// probability row and the step index and returns the chosen node.
template <typename T>
RolloutResult<T> rollout_impl(
    const VrpInstance& inst, Model<T>& model, const DecoderCache<T>& cache,
    const std::function<int(const std::vector<double>&, int)>& select) {
  auto state = DecoderState::initial(inst);
  RolloutResult<T> out;
  out.log_prob = Tensor<T>::scalar(T(0));
  int n = inst.n();
  int max_steps = 2 * n + 1;

  while (!(state.all_served() && state.last_node == 0)) {
    if (state.t > max_steps + 1)
      throw ContractError("rollout exceeded the 2n+1 step bound");
    auto mask = feasibility_mask(state);
    auto c_m = build_context(cache.enc, state, inst, model);
    auto c_s = mha_context(c_m, cache, mask, model);
    auto probs = score_nodes(c_s, cache, mask, model);
    std::vector<double> p(probs.data().begin(), probs.data().end());
    int chosen = select(p, state.t);
    out.actions.push_back(chosen);
    out.step_probs.push_back(p[chosen]);
    out.log_prob = add(out.log_prob, log_op(pick(probs, 0, chosen)));
    state = step(state, chosen, inst);
  }
  out.solution = make_solution(inst, state.partial);
  return out;
}

inline int argmax_action(const std::vector<double>& p) {
  int best = 0;
  double best_p = -1.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > best_p) {
      best_p = p[i];
      best = static_cast<int>(i);
    }
  return best;
}

}  // namespace detail

// Complete autoregressive construction. Greedy takes the argmax (ties to the
// lower index); Sample draws by inverse CDF from the caller's stream.
template <typename T>
RolloutResult<T> rollout(const VrpInstance& inst, Model<T>& model,
                         const EncodeOptions& enc_opts, RolloutMode mode,
                         Rng* rng = nullptr) {
  if (mode == RolloutMode::Sample && !rng)
    throw ContractError("rollout: sampling requires an rng");
  DecoderCache<T> cache(encode(inst, model, enc_opts), model);
  auto select = [mode, rng](const std::vector<double>& p, int) {
    return mode == RolloutMode::Greedy
               ? detail::argmax_action(p)
               : static_cast<int>(rng->sample(p));
  };
  return detail::rollout_impl(inst, model, cache, select);
}

// Re-walks a fixed action sequence and returns its log-probability under the
// current parameters. Used by gradient checking and probability audits.
template <typename T>
RolloutResult<T> rollout_forced(const VrpInstance& inst, Model<T>& model,
                                const EncodeOptions& enc_opts,
                                const std::vector<int>& actions) {
  DecoderCache<T> cache(encode(inst, model, enc_opts), model);
  std::size_t pos = 0;
  auto select = [&actions, &pos](const std::vector<double>&, int) {
    if (pos >= actions.size())
      throw ContractError("rollout_forced: action sequence too short");
    return actions[pos++];
  };
  auto out = detail::rollout_impl(inst, model, cache, select);
  if (pos != actions.size())
    throw ContractError("rollout_forced: unused trailing actions");
  return out;
}

}  // namespace gase
