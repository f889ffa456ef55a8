#include "geomix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geomix {

namespace {

double accuracy(const Matrix& logits, const std::vector<int>& labels, const Mask& mask) {
  long correct = 0, total = 0;
  for (int v = 0; v < logits.rows(); ++v) {
    if (!mask[v]) continue;
    const double* row = logits.row(v);
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (row[c] > row[best]) best = c;
    correct += best == labels[v];
    ++total;
  }
  if (total == 0) throw std::invalid_argument("evaluate: empty mask");
  return static_cast<double>(correct) / total;
}

double pseudo_fingerprint(const Matrix& pseudo) {
  double acc = 0.0;
  for (int v = 0; v < pseudo.rows(); ++v)
    for (int c = 0; c < pseudo.cols(); ++c)
      acc += pseudo(v, c) * (((v * 31 + c * 17) % 101 + 1) / 101.0);
  return acc;
}

// Clamp at zero and rescale each row to sum 1; rows that vanish entirely
// fall back to uniform. Applied to soft labels mixed under the symmetric
// scheme before they are used as loss targets.
Matrix renormalize_rows(const Matrix& m, std::vector<double>* row_sums = nullptr) {
  Matrix out(m.rows(), m.cols());
  if (row_sums != nullptr) row_sums->assign(m.rows(), 0.0);
  for (int v = 0; v < m.rows(); ++v) {
    double sum = 0.0;
    for (int c = 0; c < m.cols(); ++c) sum += std::max(m(v, c), 0.0);
    if (row_sums != nullptr) (*row_sums)[v] = sum;
    if (sum < 1e-12) {
      for (int c = 0; c < m.cols(); ++c) out(v, c) = 1.0 / m.cols();
    } else {
      for (int c = 0; c < m.cols(); ++c) out(v, c) = std::max(m(v, c), 0.0) / sum;
    }
  }
  return out;
}

Matrix renormalize_rows_backward(const Matrix& input, const Matrix& output,
                                 const std::vector<double>& row_sums, const Matrix& d_output) {
  Matrix d_input(input.rows(), input.cols());
  for (int v = 0; v < input.rows(); ++v) {
    if (row_sums[v] < 1e-12) continue;  // uniform fallback is constant
    double dot = 0.0;
    for (int c = 0; c < input.cols(); ++c) dot += d_output(v, c) * output(v, c);
    for (int c = 0; c < input.cols(); ++c) {
      if (input(v, c) <= 0.0) continue;
      d_input(v, c) = (d_output(v, c) - dot) / row_sums[v];
    }
  }
  return d_input;
}

// Adam with decoupled weight decay; moments live beside the tensors they
// track, registered in a fixed order.
class Adam {
 public:
  Adam(double lr, double wd) : lr_(lr), wd_(wd) {}

  int add_slot(const Matrix& shape_like) {
    moments_m_.emplace_back(shape_like.rows(), shape_like.cols());
    moments_v_.emplace_back(shape_like.rows(), shape_like.cols());
    return static_cast<int>(moments_m_.size()) - 1;
  }

  void begin_step() { ++step_; }

  void update(int slot, Matrix& param, const Matrix& grad, bool decay) {
    Matrix& m = moments_m_[slot];
    Matrix& v = moments_v_[slot];
    const double bc1 = 1.0 - std::pow(kBeta1, step_);
    const double bc2 = 1.0 - std::pow(kBeta2, step_);
    for (size_t i = 0; i < param.data().size(); ++i) {
      const double g = grad.data()[i];
      double& mi = m.data()[i];
      double& vi = v.data()[i];
      mi = kBeta1 * mi + (1.0 - kBeta1) * g;
      vi = kBeta2 * vi + (1.0 - kBeta2) * g * g;
      double& p = param.data()[i];
      p -= lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + kEps);
      if (decay) p -= lr_ * wd_ * p;
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_, wd_;
  long step_ = 0;
  std::vector<Matrix> moments_m_, moments_v_;
};

}  // namespace

void TrainConfig::validate() const {
  mix.validate();
  if (lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("train: dropout rate must be in [0,1)");
  if (hidden_dim < 1 || projection_dim < 1)
    throw std::invalid_argument("train: dimensions must be positive");
}

ModelParams ModelParams::init(int input_dim, int hidden_dim, int num_classes, Rng& rng) {
  ModelParams p;
  p.w0 = Matrix(input_dim, hidden_dim);
  p.b0 = Matrix(1, hidden_dim);
  p.w1 = Matrix(hidden_dim, num_classes);
  p.b1 = Matrix(1, num_classes);
  const double bound0 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : p.w0.data()) v = rng.uniform(-bound0, bound0);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& v : p.w1.data()) v = rng.uniform(-bound1, bound1);
  return p;
}

Matrix gcn_forward(const ModelParams& params, const NormalizedWeights& prop, const Matrix& features,
                   double dropout_rate, Rng* dropout_rng, GcnTape* tape) {
  if (features.cols() != params.w0.rows())
    throw std::invalid_argument("gcn_forward: feature dim does not match W0");
  Matrix prop_in = aggregate(prop, features);
  Matrix pre_act = matmul(prop_in, params.w0);
  for (int v = 0; v < pre_act.rows(); ++v)
    for (int j = 0; j < pre_act.cols(); ++j) pre_act(v, j) += params.b0(0, j);

  Matrix hidden = pre_act;
  for (double& x : hidden.data()) x = std::max(x, 0.0);

  std::vector<double> dropout_scale;
  if (dropout_rate > 0.0 && dropout_rng != nullptr) {
    dropout_scale.resize(hidden.data().size());
    const double keep = 1.0 - dropout_rate;
    for (size_t i = 0; i < hidden.data().size(); ++i) {
      dropout_scale[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      hidden.data()[i] *= dropout_scale[i];
    }
  }

  Matrix prop_hidden = aggregate(prop, hidden);
  Matrix logits = matmul(prop_hidden, params.w1);
  for (int v = 0; v < logits.rows(); ++v)
    for (int c = 0; c < logits.cols(); ++c) logits(v, c) += params.b1(0, c);

  if (tape != nullptr) {
    tape->input = features;
    tape->prop_in = std::move(prop_in);
    tape->pre_act = std::move(pre_act);
    tape->hidden = std::move(hidden);
    tape->prop_hidden = std::move(prop_hidden);
    tape->dropout_scale = std::move(dropout_scale);
  }
  return logits;
}

GcnGradients gcn_backward(const ModelParams& params, const NormalizedWeights& prop, const GcnTape& tape,
                          const Matrix& d_logits, bool want_input_grad) {
  GcnGradients g;
  g.d_w1 = matmul_tn(tape.prop_hidden, d_logits);
  g.d_b1 = Matrix(1, d_logits.cols());
  for (int v = 0; v < d_logits.rows(); ++v)
    for (int c = 0; c < d_logits.cols(); ++c) g.d_b1(0, c) += d_logits(v, c);

  Matrix d_hidden = aggregate_transpose(prop, matmul_nt(d_logits, params.w1));
  if (!tape.dropout_scale.empty())
    for (size_t i = 0; i < d_hidden.data().size(); ++i) d_hidden.data()[i] *= tape.dropout_scale[i];
  for (size_t i = 0; i < d_hidden.data().size(); ++i)
    if (tape.pre_act.data()[i] <= 0.0) d_hidden.data()[i] = 0.0;

  g.d_w0 = matmul_tn(tape.prop_in, d_hidden);
  g.d_b0 = Matrix(1, d_hidden.cols());
  for (int v = 0; v < d_hidden.rows(); ++v)
    for (int j = 0; j < d_hidden.cols(); ++j) g.d_b0(0, j) += d_hidden(v, j);

  if (want_input_grad) g.d_input = aggregate_transpose(prop, matmul_nt(d_hidden, params.w0));
  return g;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int v = 0; v < logits.rows(); ++v) {
    const double* row = logits.row(v);
    double mx = row[0];
    for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < logits.cols(); ++c) sum += std::exp(row[c] - mx);
    for (int c = 0; c < logits.cols(); ++c) out(v, c) = std::exp(row[c] - mx) / sum;
  }
  return out;
}

MixedLoss mixed_loss(const Matrix& logits, const std::vector<int>& labels, const Mask& train_mask,
                     const Matrix& soft_labels, double lambda) {
  if (!logits.same_shape(soft_labels))
    throw std::invalid_argument("mixed_loss: logits/soft label shape mismatch");
  bool any_labeled = false;
  for (int v = 0; v < logits.rows(); ++v) any_labeled = any_labeled || train_mask[v];
  if (!any_labeled) throw std::invalid_argument("mixed_loss: empty labeled set");

  Matrix probs = softmax_rows(logits);
  MixedLoss result;
  result.d_logits = Matrix(logits.rows(), logits.cols());
  result.d_targets = Matrix(logits.rows(), logits.cols());
  constexpr double kLogFloor = 1e-300;
  for (int v = 0; v < logits.rows(); ++v) {
    if (train_mask[v]) {
      const int y = labels[v];
      result.value -= std::log(std::max(probs(v, y), kLogFloor));
      for (int c = 0; c < logits.cols(); ++c) result.d_logits(v, c) = probs(v, c) - (c == y ? 1.0 : 0.0);
    } else {
      double ce = 0.0;
      for (int c = 0; c < logits.cols(); ++c) {
        const double logp = std::log(std::max(probs(v, c), kLogFloor));
        ce -= soft_labels(v, c) * logp;
        result.d_logits(v, c) = lambda * (probs(v, c) - soft_labels(v, c));
        result.d_targets(v, c) = -lambda * logp;
      }
      result.value += lambda * ce;
    }
  }
  return result;
}

Matrix pseudo_labels(const ModelParams& params, const Graph& graph, const NormalizedWeights& prop) {
  Matrix probs = softmax_rows(gcn_forward(params, prop, graph.features));
  for (int v = 0; v < graph.num_nodes; ++v) {
    if (!graph.train_mask[v]) continue;
    for (int c = 0; c < probs.cols(); ++c) probs(v, c) = 0.0;
    probs(v, graph.labels[v]) = 1.0;
  }
  return probs;
}

TrainResult train(const Graph& graph, const TrainConfig& config) {
  config.validate();
  graph.validate();
  auto mask_count = [](const Mask& m) {
    long n = 0;
    for (auto x : m) n += x != 0;
    return n;
  };
  if (mask_count(graph.train_mask) == 0) throw std::invalid_argument("train: empty train mask");
  if (mask_count(graph.val_mask) == 0) throw std::invalid_argument("train: empty validation mask");
  if (mask_count(graph.test_mask) == 0) throw std::invalid_argument("train: empty test mask");

  const NormalizedWeights prop = normalize_adjacency(graph, Scheme::kSymmetric, /*add_self_loops=*/true);
  const NormalizedWeights mix_weights = normalize_adjacency(graph, config.mix.scheme, /*add_self_loops=*/false);

  Rng init_rng = Rng::substream(config.seed, streams::kInit);
  ModelParams params = ModelParams::init(graph.feature_dim(), config.hidden_dim, graph.num_classes, init_rng);
  const bool adaptive = config.mix.variant == MixVariant::kGeoMixIII;
  if (adaptive)
    params.attention = AttentionParams::init(config.mix.hops, graph.feature_dim(), config.projection_dim, init_rng);

  Adam opt(config.learning_rate, config.weight_decay);
  const int slot_w0 = opt.add_slot(params.w0);
  const int slot_b0 = opt.add_slot(params.b0);
  const int slot_w1 = opt.add_slot(params.w1);
  const int slot_b1 = opt.add_slot(params.b1);
  std::vector<int> slot_wq, slot_wk;
  if (adaptive) {
    for (int t = 0; t < config.mix.hops; ++t) {
      slot_wq.push_back(opt.add_slot(params.attention->w_query[t]));
      slot_wk.push_back(opt.add_slot(params.attention->w_key[t]));
    }
  }

  TrainResult result;
  result.best_val_acc = -1.0;
  ModelParams best = params;
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Matrix pseudo = pseudo_labels(params, graph, prop);

    std::vector<GeoMix3Tape> tapes;
    MixState state = run_mixup(graph, pseudo, config.mix, mix_weights,
                               adaptive ? &*params.attention : nullptr, adaptive ? &tapes : nullptr);

    Matrix targets = state.soft_labels;
    std::vector<double> renorm_sums;
    const bool renormalized = config.mix.scheme == Scheme::kSymmetric;
    if (renormalized) targets = renormalize_rows(state.soft_labels, &renorm_sums);

    Rng dropout_rng = Rng::substream(config.seed, streams::kDropout, static_cast<std::uint64_t>(epoch));
    GcnTape tape;
    Matrix logits = gcn_forward(params, prop, state.features, config.dropout_rate, &dropout_rng, &tape);
    MixedLoss loss = mixed_loss(logits, graph.labels, graph.train_mask, targets, config.lambda);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));

    GcnGradients grads = gcn_backward(params, prop, tape, loss.d_logits, /*want_input_grad=*/adaptive);

    std::vector<Matrix> d_wq, d_wk;
    if (adaptive) {
      Matrix d_features = std::move(grads.d_input);
      Matrix d_soft = renormalized
                          ? renormalize_rows_backward(state.soft_labels, targets, renorm_sums, loss.d_targets)
                          : loss.d_targets;
      d_wq.resize(config.mix.hops);
      d_wk.resize(config.mix.hops);
      for (int t = config.mix.hops - 1; t >= 0; --t) {
        GeoMix3Gradients g3 = geomix3_backward(tapes[t], d_features, d_soft);
        d_wq[t] = std::move(g3.d_w_query);
        d_wk[t] = std::move(g3.d_w_key);
        d_features = std::move(g3.d_features);
        d_soft = std::move(g3.d_labels);
      }
    }

    opt.begin_step();
    opt.update(slot_w0, params.w0, grads.d_w0, true);
    opt.update(slot_b0, params.b0, grads.d_b0, false);
    opt.update(slot_w1, params.w1, grads.d_w1, true);
    opt.update(slot_b1, params.b1, grads.d_b1, false);
    if (adaptive) {
      for (int t = 0; t < config.mix.hops; ++t) {
        opt.update(slot_wq[t], params.attention->w_query[t], d_wq[t], true);
        opt.update(slot_wk[t], params.attention->w_key[t], d_wk[t], true);
      }
    }

    Matrix eval_logits = gcn_forward(params, prop, graph.features);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss.value;
    rec.val_acc = accuracy(eval_logits, graph.labels, graph.val_mask);
    rec.test_acc = accuracy(eval_logits, graph.labels, graph.test_mask);
    rec.pseudo_fingerprint = pseudo_fingerprint(pseudo);
    result.history.push_back(rec);

    if (rec.val_acc > result.best_val_acc) {
      result.best_val_acc = rec.val_acc;
      result.best_epoch = epoch;
      result.test_acc = rec.test_acc;
      best = params;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }

  result.params = std::move(best);
  return result;
}

double evaluate(const ModelParams& params, const Graph& graph, const Mask& mask) {
  const NormalizedWeights prop = normalize_adjacency(graph, Scheme::kSymmetric, /*add_self_loops=*/true);
  return accuracy(gcn_forward(params, prop, graph.features), graph.labels, mask);
}

}  // namespace geomix
