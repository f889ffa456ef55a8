#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geomix/attention.hpp"
#include "geomix/graph.hpp"
#include "geomix/mix.hpp"
#include "geomix/rng.hpp"

namespace geomix {

// Two-layer GCN weights plus optional per-hop attention projections.
struct ModelParams {
  Matrix w0;  // F x H
  Matrix b0;  // 1 x H
  Matrix w1;  // H x C
  Matrix b1;  // 1 x C
  std::optional<AttentionParams> attention;

  static ModelParams init(int input_dim, int hidden_dim, int num_classes, Rng& rng);
};

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout_rate = 0.5;
  int epochs = 500;
  int patience = 100;   // early stop after this many epochs without val improvement
  double lambda = 1.0;  // weight of the mixed-label loss term
  MixConfig mix;
  std::uint64_t seed = 0;
  int hidden_dim = 64;
  int projection_dim = 16;  // GeoMix-III

  void validate() const;
};

struct GcnTape {
  Matrix input;        // X
  Matrix prop_in;      // A_hat X
  Matrix pre_act;      // A_hat X W0 + b0
  Matrix hidden;       // dropout(relu(pre_act))
  Matrix prop_hidden;  // A_hat hidden
  std::vector<double> dropout_scale;  // per hidden entry: 0 or 1/(1-rate)
};

// logits = A_hat relu(A_hat X W0 + b0) W1 + b1, with inverted dropout on the
// hidden layer when dropout_rate > 0 and a generator is supplied.
Matrix gcn_forward(const ModelParams& params, const NormalizedWeights& prop, const Matrix& features,
                   double dropout_rate = 0.0, Rng* dropout_rng = nullptr, GcnTape* tape = nullptr);

struct GcnGradients {
  Matrix d_w0, d_b0, d_w1, d_b1;
  Matrix d_input;  // populated when want_input_grad
};

GcnGradients gcn_backward(const ModelParams& params, const NormalizedWeights& prop, const GcnTape& tape,
                          const Matrix& d_logits, bool want_input_grad = false);

struct MixedLoss {
  double value = 0.0;
  Matrix d_logits;   // softmax - target per row, lambda-scaled on unlabeled rows
  Matrix d_targets;  // gradient w.r.t. the soft-label targets (unlabeled rows)
};

// Sum of one-hot cross-entropy over train-masked nodes plus lambda times
// soft-target cross-entropy over all remaining nodes.
MixedLoss mixed_loss(const Matrix& logits, const std::vector<int>& labels, const Mask& train_mask,
                     const Matrix& soft_labels, double lambda);

Matrix softmax_rows(const Matrix& logits);

// One-hot ground truth on labeled rows, detached model softmax on original
// features elsewhere.
Matrix pseudo_labels(const ModelParams& params, const Graph& graph, const NormalizedWeights& prop);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double pseudo_fingerprint = 0.0;  // deterministic functional of the epoch's pseudo labels
};

struct TrainResult {
  ModelParams params;  // snapshot at best validation accuracy
  std::vector<EpochRecord> history;
  double best_val_acc = 0.0;
  int best_epoch = 0;
  double test_acc = 0.0;  // test accuracy of the returned params
};

TrainResult train(const Graph& graph, const TrainConfig& config);

// Argmax accuracy over the mask, forward on original features, no mixup.
double evaluate(const ModelParams& params, const Graph& graph, const Mask& mask);

}  // namespace geomix
