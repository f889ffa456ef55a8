#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "geomix/matrix.hpp"

namespace geomix {

using Mask = std::vector<std::uint8_t>;

// Immutable input graph. Edges are directed pairs; undirected sources are
// expanded to both directions at load time so row normalization is
// unambiguous.
struct Graph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  Matrix features;          // num_nodes x F
  std::vector<int> labels;  // class index in [0, num_classes), -1 where unknown
  Mask train_mask, val_mask, test_mask;
  int num_classes = 0;

  int feature_dim() const { return features.cols(); }

  // Throws std::invalid_argument on an endpoint out of range, overlapping
  // masks, or a train-masked node without a valid label.
  void validate() const;
};

enum class Scheme { kRowNormalized, kSymmetric };

// Per-edge mixing coefficients e_vu in CSR layout keyed by destination row v.
// Immutable after construction and safe to share across threads.
struct NormalizedWeights {
  Scheme scheme = Scheme::kRowNormalized;
  int num_nodes = 0;
  std::vector<int> row_ptr;    // num_nodes + 1
  std::vector<int> col;        // neighbor u per stored edge
  std::vector<double> weight;  // e_vu per stored edge
  std::vector<int> degree;     // per node, after self-loop handling

  int nnz() const { return static_cast<int>(col.size()); }
};

// RowNormalized: e_vu = 1/deg(v). Symmetric: e_vu = 1/sqrt(deg(v)*deg(u)).
// If add_self_loops, a (v,v) edge is inserted for every node before
// normalization; isolated nodes get an implicit self-loop regardless, so
// every row carries at least one weight.
NormalizedWeights normalize_adjacency(const Graph& graph, Scheme scheme, bool add_self_loops);

// out[v] = sum over stored edges (v,u) of e_vu * matrix[u].
// Sparse-times-dense, linear in nnz * matrix.cols().
Matrix aggregate(const NormalizedWeights& weights, const Matrix& matrix);

// out[u] += e_vu * matrix[v]: the adjoint of aggregate, used by the
// reverse-mode passes.
Matrix aggregate_transpose(const NormalizedWeights& weights, const Matrix& matrix);

}  // namespace geomix
