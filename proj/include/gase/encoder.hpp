#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gase/instance.hpp"
#include "gase/model.hpp"
#include "gase/tensor.hpp"

namespace gase {

// The initial edge embedding e_ij = BN(W'0 d_ij + b'0) is affine in the
// scalar distance, and batch normalization preserves that: e_ij = A d_ij + B
// with feature vectors A and B. Every layer consumes edges through this
// factored form, which turns all n^2 edge projections into two d-vector
// projections.
template <typename T>
struct EdgeAffine {
  Tensor<T> A, B;  // both 1 x d_x
};

template <typename T>
struct EncoderOutput {
  Tensor<T> node_embed;       // H^L, (n+1) x d_x
  Tensor<T> node_embed_init;  // H^0
  Tensor<T> graph_readout;    // 1 x d_x
  std::vector<std::vector<T>> attention;          // per layer A-hat (n x n)
  std::vector<std::vector<std::uint8_t>> filters; // per layer N_f (n x n)
};

struct EncodeOptions {
  int K = -1;  // sampled neighbours per node; -1 = ceil(0.5 n)
  BnMode mode = BnMode::Train;
  bool keep_attention = false;
  // When set, layer filters are taken as given instead of recomputed
  // (used for locality experiments and gradient checking).
  const std::vector<std::vector<std::uint8_t>>* fixed_filters = nullptr;
};

inline int default_sample_count(int n) {
  return std::max(1, static_cast<int>(std::ceil(0.5 * n)));
}

// ---------------------------------------------------------------------------
// Initial embeddings (Fig. pipeline step a -> b)
// ---------------------------------------------------------------------------

// Depot via its own projection of coordinates; customers via a projection of
// (x, y, demand/Q); shared batch normalization across all n+1 rows.
template <typename T>
Tensor<T> embed_initial(const VrpInstance& inst, Model<T>& model, BnMode mode) {
  int n = inst.n();
  std::vector<T> depot_feat{static_cast<T>(inst.coords[0][0]),
                            static_cast<T>(inst.coords[0][1])};
  std::vector<T> cust_feat;
  cust_feat.reserve(static_cast<std::size_t>(n) * 3);
  for (int i = 1; i <= n; ++i) {
    cust_feat.push_back(static_cast<T>(inst.coords[i][0]));
    cust_feat.push_back(static_cast<T>(inst.coords[i][1]));
    cust_feat.push_back(static_cast<T>(inst.demands[i] / inst.capacity));
  }
  auto depot_in = Tensor<T>::from(1, 2, std::move(depot_feat));
  auto cust_in = Tensor<T>::from(n, 3, std::move(cust_feat));

  auto depot_row = add_rowvec(matmul_nt(depot_in, model.p("enc.init.dp.W")),
                              model.p("enc.init.dp.b"));
  auto cust_rows = add_rowvec(matmul_nt(cust_in, model.p("enc.init.node.W")),
                              model.p("enc.init.node.b"));
  auto raw = concat_rows<T>({depot_row, cust_rows});
  return batchnorm(raw, model.p("enc.init.bn.gamma"), model.p("enc.init.bn.beta"),
                   model.stats("enc.init.bn"), mode);
}

// Edge embedding in factored form. The pre-BN feature f of pair (i,j) is
// w_f d_ij + b_f, so its population moments over all (n+1)^2 pairs are
// mu_f = w_f mean(D) + b_f and var_f = w_f^2 var(D); normalization stays
// affine in d_ij in both BN modes.
template <typename T>
EdgeAffine<T> edge_embedding_affine(const VrpInstance& inst, Model<T>& model,
                                    BnMode mode) {
  int m = inst.num_nodes();
  double mean_d = 0.0, var_d = 0.0;
  for (double v : inst.dist) mean_d += v;
  mean_d /= inst.dist.size();
  for (double v : inst.dist) var_d += (v - mean_d) * (v - mean_d);
  var_d /= inst.dist.size();
  (void)m;

  auto w = transpose(model.p("enc.init.edge.W"));  // 1 x d
  const auto& b = model.p("enc.init.edge.b");
  const auto& gamma = model.p("enc.init.edge_bn.gamma");
  const auto& beta = model.p("enc.init.edge_bn.beta");
  auto* stats = model.stats("enc.init.edge_bn");

  Tensor<T> denom, mu;
  if (mode == BnMode::Train) {
    mu = add(scale(w, static_cast<T>(mean_d)), b);
    denom = csqrt(add_const(scale(mul(w, w), static_cast<T>(var_d)),
                            static_cast<T>(kBnEps)));
    if (stats) {
      std::vector<T> mu_v(mu.data()), var_v(w.size());
      for (std::size_t f = 0; f < var_v.size(); ++f)
        var_v[f] = w.data()[f] * w.data()[f] * static_cast<T>(var_d);
      stats->stage(mu_v, var_v);
    }
  } else {
    mu = Tensor<T>::from(1, static_cast<int>(stats->running_mean.size()),
                         std::vector<T>(stats->running_mean));
    std::vector<T> dv(stats->running_var.size());
    for (std::size_t f = 0; f < dv.size(); ++f)
      dv[f] = std::sqrt(stats->running_var[f] + static_cast<T>(kBnEps));
    int features = static_cast<int>(dv.size());
    denom = Tensor<T>::from(1, features, std::move(dv));
  }
  EdgeAffine<T> e;
  e.A = cdiv(mul(gamma, w), denom);
  e.B = add(beta, cdiv(mul(gamma, sub(b, mu)), denom));
  return e;
}

// Materialized e_ij for a single pair; reference path used by tests.
template <typename T>
Tensor<T> edge_embedding_at(const EdgeAffine<T>& e, double d_ij) {
  return add(scale(e.A, static_cast<T>(d_ij)), e.B);
}

// ---------------------------------------------------------------------------
// Attention correlation matrix and top-K filter
// ---------------------------------------------------------------------------

// Raw attention scores over customers (n x n): scaled dot products of query
// W_q h_i against key W_k (h_j + e_ij). `cust` is the n x d customer block
// of H^(l-1); `dc` is the constant n x n customer distance matrix.
template <typename T>
Tensor<T> attention_scores(const Tensor<T>& cust, const EdgeAffine<T>& e,
                           const Tensor<T>& dc, const Tensor<T>& wq,
                           const Tensor<T>& wk) {
  int n = cust.rows();
  T inv_sqrt = T(1) / std::sqrt(static_cast<T>(wk.rows()));
  auto q = matmul_nt(cust, wq);           // n x d
  auto k = matmul_nt(cust, wk);           // n x d
  auto ka = matmul_nt(e.A, wk);           // 1 x d
  auto kb = matmul_nt(e.B, wk);           // 1 x d
  auto s = scale(matmul_nt(q, k), inv_sqrt);
  auto qa = scale(matmul_nt(q, ka), inv_sqrt);  // n x 1
  auto qb = scale(matmul_nt(q, kb), inv_sqrt);  // n x 1
  s = add(s, mul(bcast_col(qa, n), dc));
  s = add_colvec(s, qb);
  return s;
}

// Row-softmax of the scores: the per-layer correlation coefficients.
template <typename T>
Tensor<T> attention_matrix(const Tensor<T>& cust, const EdgeAffine<T>& e,
                           const Tensor<T>& dc, const Tensor<T>& wq,
                           const Tensor<T>& wk) {
  return softmax_rows_masked(attention_scores(cust, e, dc, wq, wk), nullptr);
}

// Binary neighbour filter: per row, 1 at the K largest coefficients, ties
// broken toward the lower node index.
inline std::vector<std::uint8_t> topk_filter_values(const std::vector<double>& a,
                                                    int n, int k) {
  if (k < 1 || k > n) throw ArgumentError("topk_filter: K out of range");
  std::vector<std::uint8_t> filter(a.size(), 0);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    const double* r = a.data() + static_cast<std::size_t>(i) * n;
    std::stable_sort(idx.begin(), idx.end(),
                     [r](int x, int y) { return r[x] > r[y]; });
    for (int t = 0; t < k; ++t)
      filter[static_cast<std::size_t>(i) * n + idx[t]] = 1;
  }
  return filter;
}

template <typename T>
std::vector<std::uint8_t> topk_filter(const Tensor<T>& a_hat, int k) {
  std::vector<double> vals(a_hat.data().begin(), a_hat.data().end());
  return topk_filter_values(vals, a_hat.rows(), k);
}

// ---------------------------------------------------------------------------
// Residual layer
// ---------------------------------------------------------------------------

// One residual layer: surviving coefficients re-normalized over the K
// selected entries (masked softmax of the raw scores, i.e. the filtered
// correlation row rescaled to sum 1), edge-fused value aggregation,
// skip-connection, batch normalization. The depot row aggregates densely
// over all customers.
template <typename T>
Tensor<T> layer_forward(const Tensor<T>& h_prev, const EdgeAffine<T>& e,
                        const Tensor<T>& scores,
                        const std::vector<std::uint8_t>& filter,
                        const Tensor<T>& dc, const Tensor<T>& d0,
                        Model<T>& model, int layer, BnMode mode) {
  int n = scores.rows();
  int d = model.cfg.d_x;
  std::string p = "enc.L" + std::to_string(layer) + ".";
  const auto& wq = model.p(p + "Wq");
  const auto& wk = model.p(p + "Wk");
  const auto& wv = model.p(p + "Wv");
  T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d));

  auto cust = slice_rows(h_prev, 1, n + 1);
  auto depot = row(h_prev, 0);

  auto a_prime = softmax_rows_masked(scores, &filter);
  auto v = matmul_nt(cust, wv);
  auto va = matmul_nt(e.A, wv);
  auto vb = matmul_nt(e.B, wv);
  auto s = row_sums(mul(a_prime, dc));  // sum_j alpha'_ij d_ij, n x 1
  auto agg_cust = add_rowvec(add(matmul(a_prime, v), matmul(s, va)), vb);

  // Depot: dense attention row over all customers.
  auto k = matmul_nt(cust, wk);
  auto ka = matmul_nt(e.A, wk);
  auto kb = matmul_nt(e.B, wk);
  auto q0 = matmul_nt(depot, wq);
  auto s0 = scale(matmul_nt(q0, k), inv_sqrt);
  s0 = add(s0, scale(mul_scalar_t(d0, matmul_nt(q0, ka)), inv_sqrt));
  s0 = add_colvec(s0, scale(matmul_nt(q0, kb), inv_sqrt));
  auto a0 = softmax_rows_masked(s0, nullptr);
  auto sd0 = row_sums(mul(a0, d0));
  auto agg_depot = add(add(matmul(a0, v), mul_scalar_t(va, sd0)), vb);

  auto agg = concat_rows<T>({agg_depot, agg_cust});
  return batchnorm(add(agg, h_prev), model.p(p + "bn.gamma"),
                   model.p(p + "bn.beta"), model.stats(p + "bn"), mode);
}

// Readout: shallow MLP on (H^L || H^0) rows, then row-wise mean.
template <typename T>
Tensor<T> graph_readout(const Tensor<T>& h0, const Tensor<T>& hL,
                        Model<T>& model) {
  auto cat = concat_cols<T>({hL, h0});
  auto hidden = relu(add_rowvec(matmul_nt(cat, model.p("enc.read.W1")),
                                model.p("enc.read.b1")));
  auto out = add_rowvec(matmul_nt(hidden, model.p("enc.read.W2")),
                        model.p("enc.read.b2"));
  return mean_rows(out);
}

// ---------------------------------------------------------------------------
// Full encoder
// ---------------------------------------------------------------------------

template <typename T>
EncoderOutput<T> encode(const VrpInstance& inst, Model<T>& model,
                        const EncodeOptions& opts = {}) {
  int n = inst.n();
  int k = opts.K > 0 ? opts.K : default_sample_count(n);
  if (k < 1 || k > n)
    throw ArgumentError("encode: K=" + std::to_string(k) +
                        " out of range for n=" + std::to_string(n));

  // Constant distance blocks from the normalized coordinates.
  std::vector<T> dc_v(static_cast<std::size_t>(n) * n);
  std::vector<T> d0_v(n);
  for (int i = 1; i <= n; ++i) {
    d0_v[i - 1] = static_cast<T>(inst.d(0, i));
    for (int j = 1; j <= n; ++j)
      dc_v[static_cast<std::size_t>(i - 1) * n + (j - 1)] =
          static_cast<T>(inst.d(i, j));
  }
  auto dc = Tensor<T>::from(n, n, std::move(dc_v));
  auto d0 = Tensor<T>::from(1, n, std::move(d0_v));

  EncoderOutput<T> out;
  auto e = edge_embedding_affine(inst, model, opts.mode);
  auto h = embed_initial(inst, model, opts.mode);
  out.node_embed_init = h;

  for (int l = 0; l < model.cfg.layers; ++l) {
    auto scores =
        attention_scores(slice_rows(h, 1, n + 1), e, dc,
                         model.p("enc.L" + std::to_string(l) + ".Wq"),
                         model.p("enc.L" + std::to_string(l) + ".Wk"));
    // The softmax is monotone per row, so ranking the raw scores selects
    // the same neighbours as ranking the correlation coefficients.
    std::vector<std::uint8_t> filter =
        opts.fixed_filters ? (*opts.fixed_filters)[l] : topk_filter(scores, k);
    if (opts.keep_attention) {
      auto a_hat = softmax_rows_masked(scores, nullptr);
      out.attention.push_back(std::vector<T>(a_hat.data()));
    }
    out.filters.push_back(filter);
    h = layer_forward(h, e, scores, filter, dc, d0, model, l, opts.mode);
  }
  out.node_embed = h;
  out.graph_readout = graph_readout(out.node_embed_init, h, model);
  return out;
}

}  // namespace gase
