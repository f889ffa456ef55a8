// Test-only reference implementations, kept independent of the library's
// sparse/factorized code paths on purpose.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "geomix/graph.hpp"
#include "geomix/matrix.hpp"

namespace geomix::testing {

// Dense normalized adjacency built straight from the definition: degree
// matrix on explicit dense adjacency, then D^-1 A or D^-1/2 A D^-1/2.
inline Matrix dense_normalized_adjacency(const Graph& graph, Scheme scheme, bool add_self_loops) {
  const int n = graph.num_nodes;
  Matrix adj(n, n);
  for (const auto& [u, v] : graph.edges) adj(u, v) += 1.0;
  if (add_self_loops)
    for (int v = 0; v < n; ++v) adj(v, v) += 1.0;
  std::vector<double> degree(n, 0.0);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) degree[v] += adj(v, u);
  for (int v = 0; v < n; ++v)
    if (degree[v] == 0.0) {
      adj(v, v) = 1.0;  // isolated-node self-loop
      degree[v] = 1.0;
    }
  Matrix out(n, n);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      if (adj(v, u) == 0.0) continue;
      out(v, u) = scheme == Scheme::kRowNormalized ? adj(v, u) / degree[v]
                                                   : adj(v, u) / std::sqrt(degree[v] * degree[u]);
    }
  return out;
}

// Explicit N x N attention: a_vu = (1 + q_v.k_u) / sum_w (1 + q_v.k_w),
// uniform fallback when the denominator underflows.
inline Matrix dense_allpair(const Matrix& queries, const Matrix& keys, const Matrix& values) {
  const int n = queries.rows();
  Matrix out(n, values.cols());
  for (int v = 0; v < n; ++v) {
    std::vector<double> kappa(n);
    double denom = 0.0;
    for (int u = 0; u < n; ++u) {
      double dot = 0.0;
      for (int j = 0; j < queries.cols(); ++j) dot += queries(v, j) * keys(u, j);
      kappa[u] = 1.0 + dot;
      denom += kappa[u];
    }
    for (int u = 0; u < n; ++u) {
      const double a = denom < 1e-9 ? 1.0 / n : kappa[u] / denom;
      for (int j = 0; j < values.cols(); ++j) out(v, j) += a * values(u, j);
    }
  }
  return out;
}

// Central finite difference of a scalar function with respect to one matrix
// entry.
inline double fd_entry(Matrix& param, int r, int c, const std::function<double()>& value, double h = 1e-5) {
  const double saved = param(r, c);
  param(r, c) = saved + h;
  const double up = value();
  param(r, c) = saved - h;
  const double down = value();
  param(r, c) = saved;
  return (up - down) / (2.0 * h);
}

inline Graph path3_graph() {
  Graph g;
  g.num_nodes = 3;
  g.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  g.features = Matrix::from_rows({{1.0}, {2.0}, {4.0}});
  g.labels = {0, 1, 0};
  g.train_mask = {1, 1, 0};
  g.val_mask = {0, 0, 1};
  g.test_mask = {0, 0, 0};
  g.num_classes = 2;
  return g;
}

}  // namespace geomix::testing
