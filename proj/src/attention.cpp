#include "geomix/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace geomix {

namespace {

constexpr double kNormFloor = 1e-12;
constexpr double kDenomFloor = 1e-9;

struct AllPairParts {
  Matrix q, k;                // unit (or zero) rows
  std::vector<double> key_sum;
  std::vector<double> denom;
  std::vector<std::uint8_t> fallback;
};

AllPairParts allpair_parts(const Matrix& queries, const Matrix& keys) {
  AllPairParts parts;
  parts.q = queries;
  parts.k = keys;
  const int n = queries.rows();
  parts.key_sum = column_sums(keys);
  parts.denom.assign(n, 0.0);
  parts.fallback.assign(n, 0);
  for (int v = 0; v < n; ++v) {
    double dot = 0.0;
    const double* qrow = queries.row(v);
    for (int j = 0; j < queries.cols(); ++j) dot += qrow[j] * parts.key_sum[j];
    parts.denom[v] = static_cast<double>(n) + dot;
    if (parts.denom[v] < kDenomFloor) parts.fallback[v] = 1;
  }
  return parts;
}

// out_v = (q_v . (K^T V) + colsum(V)) / denom_v, uniform mean on fallback rows
Matrix allpair_apply(const AllPairParts& parts, const Matrix& values, Matrix* kt_values_out,
                     std::vector<double>* colsum_out) {
  const int n = values.rows();
  const int d = values.cols();
  Matrix kt_values = matmul_tn(parts.k, values);  // F' x d
  std::vector<double> colsum = column_sums(values);
  Matrix out(n, d);
  for (int v = 0; v < n; ++v) {
    double* orow = out.row(v);
    if (parts.fallback[v]) {
      for (int j = 0; j < d; ++j) orow[j] = colsum[j] / n;
      continue;
    }
    const double* qrow = parts.q.row(v);
    for (int f = 0; f < parts.q.cols(); ++f) {
      const double qvf = qrow[f];
      if (qvf == 0.0) continue;
      const double* krow = kt_values.row(f);
      for (int j = 0; j < d; ++j) orow[j] += qvf * krow[j];
    }
    const double inv = 1.0 / parts.denom[v];
    for (int j = 0; j < d; ++j) orow[j] = (orow[j] + colsum[j]) * inv;
  }
  if (kt_values_out != nullptr) *kt_values_out = std::move(kt_values);
  if (colsum_out != nullptr) *colsum_out = std::move(colsum);
  return out;
}

}  // namespace

AttentionParams AttentionParams::init(int hops, int input_dim, int projection_dim, Rng& rng) {
  AttentionParams params;
  params.input_dim = input_dim;
  params.projection_dim = projection_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (int t = 0; t < hops; ++t) {
    Matrix wq(input_dim, projection_dim);
    Matrix wk(input_dim, projection_dim);
    for (double& v : wq.data()) v = rng.uniform(-bound, bound);
    for (double& v : wk.data()) v = rng.uniform(-bound, bound);
    params.w_query.push_back(std::move(wq));
    params.w_key.push_back(std::move(wk));
  }
  return params;
}

void AttentionParams::validate() const {
  if (w_query.size() != w_key.size())
    throw std::invalid_argument("attention: query/key hop counts differ");
  for (size_t t = 0; t < w_query.size(); ++t) {
    if (w_query[t].rows() != input_dim || w_query[t].cols() != projection_dim ||
        w_key[t].rows() != input_dim || w_key[t].cols() != projection_dim)
      throw std::invalid_argument("attention: projection shape mismatch at hop " + std::to_string(t));
    if (!all_finite(w_query[t]) || !all_finite(w_key[t]))
      throw std::invalid_argument("attention: non-finite projection entries at hop " + std::to_string(t));
  }
}

Matrix project_normalize(const Matrix& features, const Matrix& w) {
  Matrix projected = matmul(features, w);
  for (int v = 0; v < projected.rows(); ++v) {
    double* row = projected.row(v);
    double sq = 0.0;
    for (int j = 0; j < projected.cols(); ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm < kNormFloor) {
      for (int j = 0; j < projected.cols(); ++j) row[j] = 0.0;
    } else {
      for (int j = 0; j < projected.cols(); ++j) row[j] /= norm;
    }
  }
  return projected;
}

Matrix allpair_aggregate(const Matrix& queries, const Matrix& keys, const Matrix& values) {
  if (queries.rows() != keys.rows() || queries.cols() != keys.cols())
    throw std::invalid_argument("allpair_aggregate: query/key shapes differ");
  if (values.rows() != keys.rows())
    throw std::invalid_argument("allpair_aggregate: value row count does not match keys");
  return allpair_apply(allpair_parts(queries, keys), values, nullptr, nullptr);
}

MixState geomix3_step(const MixState& state, const NormalizedWeights& weights, const AttentionParams& params,
                      double alpha, double eta, GeoMix3Tape* tape) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("geomix3_step: alpha must be in [0,1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("geomix3_step: eta must be in [0,1]");
  if (state.hop >= params.hops())
    throw std::invalid_argument("geomix3_step: no projection pair for hop " + std::to_string(state.hop));
  const Matrix& wq = params.w_query[state.hop];
  const Matrix& wk = params.w_key[state.hop];

  Matrix q = matmul(state.features, wq);
  Matrix k = matmul(state.features, wk);
  const int n = state.features.rows();
  std::vector<double> norm_q(n, 0.0), norm_k(n, 0.0);
  auto normalize_rows = [](Matrix& m, std::vector<double>& norms) {
    for (int v = 0; v < m.rows(); ++v) {
      double* row = m.row(v);
      double sq = 0.0;
      for (int j = 0; j < m.cols(); ++j) sq += row[j] * row[j];
      norms[v] = std::sqrt(sq);
      if (norms[v] < kNormFloor) {
        for (int j = 0; j < m.cols(); ++j) row[j] = 0.0;
      } else {
        for (int j = 0; j < m.cols(); ++j) row[j] /= norms[v];
      }
    }
  };
  normalize_rows(q, norm_q);
  normalize_rows(k, norm_k);

  AllPairParts parts = allpair_parts(q, k);

  Matrix kt_features, kt_labels;
  std::vector<double> colsum_features, colsum_labels;
  Matrix attn_features = allpair_apply(parts, state.features, &kt_features, &colsum_features);
  Matrix attn_labels = allpair_apply(parts, state.soft_labels, &kt_labels, &colsum_labels);

  Matrix hat_features = linear_combo(alpha, state.features, 1.0 - alpha, attn_features);
  Matrix hat_labels = linear_combo(alpha, state.soft_labels, 1.0 - alpha, attn_labels);
  Matrix graph_features = aggregate(weights, state.features);
  Matrix graph_labels = aggregate(weights, state.soft_labels);
  Matrix out_features = linear_combo(1.0 - eta, hat_features, eta, graph_features);
  Matrix out_labels = linear_combo(1.0 - eta, hat_labels, eta, graph_labels);

  if (tape != nullptr) {
    tape->hop = state.hop;
    tape->alpha = alpha;
    tape->eta = eta;
    tape->features_in = state.features;
    tape->labels_in = state.soft_labels;
    tape->wq = wq;
    tape->wk = wk;
    tape->norm_q = std::move(norm_q);
    tape->norm_k = std::move(norm_k);
    tape->q = std::move(parts.q);
    tape->k = std::move(parts.k);
    tape->key_sum = std::move(parts.key_sum);
    tape->denom = std::move(parts.denom);
    tape->uniform_fallback = std::move(parts.fallback);
    tape->kt_features = std::move(kt_features);
    tape->kt_labels = std::move(kt_labels);
    tape->colsum_features = std::move(colsum_features);
    tape->colsum_labels = std::move(colsum_labels);
    tape->attn_features = std::move(attn_features);
    tape->attn_labels = std::move(attn_labels);
    tape->weights = weights;
  }

  MixState next;
  next.features = std::move(out_features);
  next.soft_labels = std::move(out_labels);
  next.features0 = state.features0;
  next.soft_labels0 = state.soft_labels0;
  next.hop = state.hop + 1;
  return next;
}

GeoMix3Gradients geomix3_backward(const GeoMix3Tape& tape, const Matrix& d_features_out,
                                  const Matrix& d_labels_out) {
  const Matrix& h = tape.features_in;
  const Matrix& y = tape.labels_in;
  if (!d_features_out.same_shape(h) || !d_labels_out.same_shape(y))
    throw std::runtime_error("geomix3_backward: upstream gradient shape does not match tape");
  const int n = h.rows();
  const int fp = tape.q.cols();
  const double alpha = tape.alpha;
  const double eta = tape.eta;

  // graph branch and residual
  Matrix d_hat_h(h.rows(), h.cols());
  add_scaled(d_hat_h, 1.0 - eta, d_features_out);
  Matrix d_hat_y(y.rows(), y.cols());
  add_scaled(d_hat_y, 1.0 - eta, d_labels_out);
  Matrix dh = aggregate_transpose(tape.weights, d_features_out);
  for (double& v : dh.data()) v *= eta;
  Matrix dy = aggregate_transpose(tape.weights, d_labels_out);
  for (double& v : dy.data()) v *= eta;
  add_scaled(dh, alpha, d_hat_h);
  add_scaled(dy, alpha, d_hat_y);
  Matrix d_attn_h = d_hat_h;
  for (double& v : d_attn_h.data()) v *= (1.0 - alpha);
  Matrix d_attn_y = d_hat_y;
  for (double& v : d_attn_y.data()) v *= (1.0 - alpha);

  // all-pair branch: attn_v = (q_v . K^T V + colsum(V)) / denom_v
  Matrix dq(n, fp);
  Matrix d_kt_h(tape.kt_features.rows(), tape.kt_features.cols());
  Matrix d_kt_y(tape.kt_labels.rows(), tape.kt_labels.cols());
  std::vector<double> d_colsum_h(h.cols(), 0.0);
  std::vector<double> d_colsum_y(y.cols(), 0.0);
  std::vector<double> d_denom(n, 0.0);

  auto backprop_values = [&](const Matrix& d_attn, const Matrix& attn, const Matrix& kt_values,
                             Matrix& d_kt_values, std::vector<double>& d_colsum) {
    const int d = d_attn.cols();
    for (int v = 0; v < n; ++v) {
      const double* drow = d_attn.row(v);
      if (tape.uniform_fallback[v]) {
        for (int j = 0; j < d; ++j) d_colsum[j] += drow[j] / n;
        continue;
      }
      const double inv = 1.0 / tape.denom[v];
      double denom_acc = 0.0;
      const double* arow = attn.row(v);
      for (int j = 0; j < d; ++j) {
        const double dnum = drow[j] * inv;
        d_colsum[j] += dnum;
        denom_acc += drow[j] * arow[j];
      }
      d_denom[v] -= denom_acc * inv;
      const double* qrow = tape.q.row(v);
      for (int f = 0; f < fp; ++f) {
        const double* ktrow = kt_values.row(f);
        double* dktrow = d_kt_values.row(f);
        double acc = 0.0;
        const double qvf = qrow[f];
        for (int j = 0; j < d; ++j) {
          const double dnum = drow[j] * inv;
          acc += ktrow[j] * dnum;
          dktrow[j] += qvf * dnum;
        }
        dq(v, f) += acc;
      }
    }
  };
  backprop_values(d_attn_h, tape.attn_features, tape.kt_features, d_kt_h, d_colsum_h);
  backprop_values(d_attn_y, tape.attn_labels, tape.kt_labels, d_kt_y, d_colsum_y);

  // denom_v = n + q_v . key_sum
  std::vector<double> d_key_sum(fp, 0.0);
  for (int v = 0; v < n; ++v) {
    if (d_denom[v] == 0.0) continue;
    for (int f = 0; f < fp; ++f) {
      dq(v, f) += d_denom[v] * tape.key_sum[f];
      d_key_sum[f] += d_denom[v] * tape.q(v, f);
    }
  }

  // kt_values = K^T V and column sums
  Matrix dk = matmul_nt(h, d_kt_h);  // dK += H * d(K^T H)^T
  add_scaled(dk, 1.0, matmul_nt(y, d_kt_y));
  add_scaled(dh, 1.0, matmul(tape.k, d_kt_h));
  add_scaled(dy, 1.0, matmul(tape.k, d_kt_y));
  for (int v = 0; v < n; ++v) {
    double* dkrow = dk.row(v);
    for (int f = 0; f < fp; ++f) dkrow[f] += d_key_sum[f];
    double* dhrow = dh.row(v);
    for (int j = 0; j < h.cols(); ++j) dhrow[j] += d_colsum_h[j];
    double* dyrow = dy.row(v);
    for (int j = 0; j < y.cols(); ++j) dyrow[j] += d_colsum_y[j];
  }

  // row normalization: q = p / |p|, zero rows pass zero gradient
  auto normalize_backward = [&](const Matrix& unit, const std::vector<double>& norms, const Matrix& d_unit) {
    Matrix d_proj(n, fp);
    for (int v = 0; v < n; ++v) {
      if (norms[v] < kNormFloor) continue;
      const double* urow = unit.row(v);
      const double* drow = d_unit.row(v);
      double dot = 0.0;
      for (int f = 0; f < fp; ++f) dot += urow[f] * drow[f];
      double* out = d_proj.row(v);
      const double inv = 1.0 / norms[v];
      for (int f = 0; f < fp; ++f) out[f] = (drow[f] - urow[f] * dot) * inv;
    }
    return d_proj;
  };
  Matrix d_proj_q = normalize_backward(tape.q, tape.norm_q, dq);
  Matrix d_proj_k = normalize_backward(tape.k, tape.norm_k, dk);

  GeoMix3Gradients grads;
  grads.d_w_query = matmul_tn(h, d_proj_q);
  grads.d_w_key = matmul_tn(h, d_proj_k);
  add_scaled(dh, 1.0, matmul_nt(d_proj_q, tape.wq));
  add_scaled(dh, 1.0, matmul_nt(d_proj_k, tape.wk));
  grads.d_features = std::move(dh);
  grads.d_labels = std::move(dy);
  return grads;
}

}  // namespace geomix
