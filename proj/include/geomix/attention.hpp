#pragma once

#include <cstdint>
#include <vector>

#include "geomix/graph.hpp"
#include "geomix/mix.hpp"
#include "geomix/rng.hpp"

namespace geomix {

// One learnable projection pair (W_q, W_k) per hop; pairs are independent
// across hops.
struct AttentionParams {
  int input_dim = 0;
  int projection_dim = 0;
  std::vector<Matrix> w_query;  // hops x (F x F')
  std::vector<Matrix> w_key;

  int hops() const { return static_cast<int>(w_query.size()); }

  // Entries uniform in [-1/sqrt(F), 1/sqrt(F)].
  static AttentionParams init(int hops, int input_dim, int projection_dim, Rng& rng);

  void validate() const;
};

// Each output row is the projected row scaled to unit L2 norm; rows whose
// projected norm falls below 1e-12 come back as zero rows.
Matrix project_normalize(const Matrix& features, const Matrix& w);

// out[v] = sum_u a_vu values[u] with a_vu = kappa(q_v,k_u) / sum_w kappa(q_v,k_w)
// and kappa(q,k) = 1 + q.k (nonnegative for unit rows). Computed through the
// factorization Q(K^T V) / (Q(K^T 1) + N) without materializing the N x N
// weight matrix; rows whose denominator underflows 1e-9 fall back to uniform
// weights 1/N.
Matrix allpair_aggregate(const Matrix& queries, const Matrix& keys, const Matrix& values);

// Forward intermediates recorded by geomix3_step for the reverse pass.
struct GeoMix3Tape {
  int hop = 0;
  double alpha = 0.0;
  double eta = 0.0;
  Matrix features_in, labels_in;
  Matrix wq, wk;
  std::vector<double> norm_q, norm_k;  // pre-normalization row norms
  Matrix q, k;                         // unit (or zero) rows
  std::vector<double> key_sum;   // sum of key rows
  std::vector<double> denom;     // N + q_v . key_sum
  std::vector<std::uint8_t> uniform_fallback;
  Matrix kt_features, kt_labels;  // K^T H, K^T Y
  std::vector<double> colsum_features, colsum_labels;
  Matrix attn_features, attn_labels;  // all-pair aggregates
  NormalizedWeights weights;          // graph branch
};

// Two-stage adaptive step: an all-pair mix with residual alpha, then a
// convex blend with the graph aggregate weighted by eta. The same attention
// weights are applied to features and soft labels. The pair
// (w_query[t], w_key[t]) for t = state.hop must exist.
MixState geomix3_step(const MixState& state, const NormalizedWeights& weights, const AttentionParams& params,
                      double alpha, double eta, GeoMix3Tape* tape = nullptr);

struct GeoMix3Gradients {
  Matrix d_w_query, d_w_key;
  Matrix d_features, d_labels;  // gradients w.r.t. the step's input state
};

// Exact reverse-mode gradients of one geomix3_step given gradients w.r.t.
// its output features and labels.
GeoMix3Gradients geomix3_backward(const GeoMix3Tape& tape, const Matrix& d_features_out,
                                  const Matrix& d_labels_out);

}  // namespace geomix
