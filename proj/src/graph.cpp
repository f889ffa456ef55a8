#include "geomix/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace geomix {

void Graph::validate() const {
  if (num_nodes < 0) throw std::invalid_argument("graph: negative node count");
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw std::invalid_argument("graph: edge endpoint " + std::to_string(u < 0 || u >= num_nodes ? u : v) +
                                  " out of range [0, " + std::to_string(num_nodes) + ")");
  }
  if (!features.empty() && features.rows() != num_nodes)
    throw std::invalid_argument("graph: feature row count does not match node count");
  if (!labels.empty() && static_cast<int>(labels.size()) != num_nodes)
    throw std::invalid_argument("graph: label count does not match node count");
  auto check_mask = [&](const Mask& m, const char* name) {
    if (!m.empty() && static_cast<int>(m.size()) != num_nodes)
      throw std::invalid_argument(std::string("graph: ") + name + " mask length does not match node count");
  };
  check_mask(train_mask, "train");
  check_mask(val_mask, "val");
  check_mask(test_mask, "test");
  for (int v = 0; v < num_nodes; ++v) {
    const int in_train = v < static_cast<int>(train_mask.size()) && train_mask[v];
    const int in_val = v < static_cast<int>(val_mask.size()) && val_mask[v];
    const int in_test = v < static_cast<int>(test_mask.size()) && test_mask[v];
    if (in_train + in_val + in_test > 1)
      throw std::invalid_argument("graph: masks overlap at node " + std::to_string(v));
    if (in_train) {
      if (labels.empty() || labels[v] < 0 || labels[v] >= num_classes)
        throw std::invalid_argument("graph: train node " + std::to_string(v) + " has no valid label");
    }
  }
}

NormalizedWeights normalize_adjacency(const Graph& graph, Scheme scheme, bool add_self_loops) {
  graph.validate();
  const int n = graph.num_nodes;

  std::vector<int> degree(n, 0);
  for (const auto& [u, v] : graph.edges) {
    (void)v;
    ++degree[u];
  }
  std::vector<std::uint8_t> needs_loop(n, 0);
  for (int v = 0; v < n; ++v) {
    if (add_self_loops || degree[v] == 0) {
      needs_loop[v] = 1;
      ++degree[v];
    }
  }

  NormalizedWeights w;
  w.scheme = scheme;
  w.num_nodes = n;
  w.degree = degree;
  w.row_ptr.assign(n + 1, 0);
  for (int v = 0; v < n; ++v) w.row_ptr[v + 1] = w.row_ptr[v] + degree[v];
  w.col.assign(w.row_ptr[n], 0);
  w.weight.assign(w.row_ptr[n], 0.0);

  std::vector<int> cursor(w.row_ptr.begin(), w.row_ptr.end() - 1);
  for (const auto& [u, v] : graph.edges) w.col[cursor[u]++] = v;
  for (int v = 0; v < n; ++v)
    if (needs_loop[v]) w.col[cursor[v]++] = v;

  for (int v = 0; v < n; ++v) {
    for (int e = w.row_ptr[v]; e < w.row_ptr[v + 1]; ++e) {
      const int u = w.col[e];
      w.weight[e] = scheme == Scheme::kRowNormalized ? 1.0 / degree[v]
                                                     : 1.0 / std::sqrt(static_cast<double>(degree[v]) * degree[u]);
    }
  }
  return w;
}

Matrix aggregate(const NormalizedWeights& weights, const Matrix& matrix) {
  if (matrix.rows() != weights.num_nodes)
    throw std::invalid_argument("aggregate: matrix row count does not match node count");
  const int d = matrix.cols();
  Matrix out(weights.num_nodes, d);
  for (int v = 0; v < weights.num_nodes; ++v) {
    double* orow = out.row(v);
    for (int e = weights.row_ptr[v]; e < weights.row_ptr[v + 1]; ++e) {
      const double wvu = weights.weight[e];
      const double* mrow = matrix.row(weights.col[e]);
      for (int j = 0; j < d; ++j) orow[j] += wvu * mrow[j];
    }
  }
  return out;
}

Matrix aggregate_transpose(const NormalizedWeights& weights, const Matrix& matrix) {
  if (matrix.rows() != weights.num_nodes)
    throw std::invalid_argument("aggregate_transpose: matrix row count does not match node count");
  const int d = matrix.cols();
  Matrix out(weights.num_nodes, d);
  for (int v = 0; v < weights.num_nodes; ++v) {
    const double* mrow = matrix.row(v);
    for (int e = weights.row_ptr[v]; e < weights.row_ptr[v + 1]; ++e) {
      const double wvu = weights.weight[e];
      double* orow = out.row(weights.col[e]);
      for (int j = 0; j < d; ++j) orow[j] += wvu * mrow[j];
    }
  }
  return out;
}

}  // namespace geomix
