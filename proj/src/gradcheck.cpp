#include "geomix/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "geomix/attention.hpp"
#include "geomix/mix.hpp"
#include "geomix/synthetic.hpp"
#include "geomix/trainer.hpp"

namespace geomix {

namespace {

constexpr double kStep = 1e-5;

struct Instance {
  Graph graph;
  NormalizedWeights prop;
  NormalizedWeights mix_weights;
  Matrix pseudo;
  ModelParams params;
  MixConfig mix;
  double lambda = 1.0;
};

Instance make_instance(std::uint64_t seed, bool adaptive) {
  Rng rng = Rng::substream(seed, streams::kInit, 7);
  Instance inst;
  const int n = 12, feat = 5, hidden = 6, classes = 3;
  inst.graph = make_random_graph(n, 0.3, feat, rng);
  inst.graph.num_classes = classes;
  inst.graph.train_mask.assign(n, 0);
  inst.graph.val_mask.assign(n, 0);
  inst.graph.test_mask.assign(n, 0);
  inst.graph.labels.resize(n);
  for (int v = 0; v < n; ++v) {
    inst.graph.labels[v] = rng.uniform_int(classes);
    inst.graph.train_mask[v] = v < 4;  // a third labeled
  }
  inst.prop = normalize_adjacency(inst.graph, Scheme::kSymmetric, true);
  inst.mix_weights = normalize_adjacency(inst.graph, Scheme::kRowNormalized, false);

  inst.pseudo = Matrix(n, classes);
  for (int v = 0; v < n; ++v) {
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      inst.pseudo(v, c) = rng.uniform(0.05, 1.0);
      sum += inst.pseudo(v, c);
    }
    for (int c = 0; c < classes; ++c) inst.pseudo(v, c) /= sum;
  }

  inst.params = ModelParams::init(feat, hidden, classes, rng);
  inst.mix.variant = adaptive ? MixVariant::kGeoMixIII : MixVariant::kGeoMixI;
  inst.mix.alpha = 0.4;
  inst.mix.eta = 0.5;
  inst.mix.hops = 2;
  if (adaptive) inst.params.attention = AttentionParams::init(inst.mix.hops, feat, 3, rng);
  return inst;
}

double loss_value(const Instance& inst, const ModelParams& params, bool adaptive) {
  Matrix features = inst.graph.features;
  Matrix targets = inst.pseudo;
  if (adaptive) {
    MixState state = run_mixup(inst.graph, inst.pseudo, inst.mix, inst.mix_weights, &*params.attention);
    features = std::move(state.features);
    targets = std::move(state.soft_labels);
  }
  Matrix logits = gcn_forward(params, inst.prop, features);
  return mixed_loss(logits, inst.graph.labels, inst.graph.train_mask, targets, inst.lambda).value;
}

// min |pre-activation|: instances near the relu kink are unusable for
// finite differences
double kink_margin(const Instance& inst, bool adaptive) {
  Matrix features = inst.graph.features;
  if (adaptive) {
    MixState state = run_mixup(inst.graph, inst.pseudo, inst.mix, inst.mix_weights, &*inst.params.attention);
    features = std::move(state.features);
  }
  GcnTape tape;
  gcn_forward(inst.params, inst.prop, features, 0.0, nullptr, &tape);
  double margin = 1e18;
  for (double v : tape.pre_act.data()) margin = std::min(margin, std::abs(v));
  return margin;
}

double check_tensor(Matrix& param, const Matrix& analytic, const std::function<double()>& loss) {
  double worst = 0.0;
  for (size_t i = 0; i < param.data().size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + kStep;
    const double up = loss();
    param.data()[i] = saved - kStep;
    const double down = loss();
    param.data()[i] = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
  }
  return worst;
}

GradCheckReport run_check(std::uint64_t seed, bool adaptive) {
  Instance inst = make_instance(seed, adaptive);
  for (std::uint64_t bump = 1; kink_margin(inst, adaptive) < 1e-4 && bump < 32; ++bump)
    inst = make_instance(seed + (bump << 32), adaptive);

  // analytic gradients through the same path the trainer uses
  std::vector<GeoMix3Tape> tapes;
  Matrix features = inst.graph.features;
  Matrix targets = inst.pseudo;
  if (adaptive) {
    MixState state =
        run_mixup(inst.graph, inst.pseudo, inst.mix, inst.mix_weights, &*inst.params.attention, &tapes);
    features = std::move(state.features);
    targets = std::move(state.soft_labels);
  }
  GcnTape tape;
  Matrix logits = gcn_forward(inst.params, inst.prop, features, 0.0, nullptr, &tape);
  MixedLoss loss = mixed_loss(logits, inst.graph.labels, inst.graph.train_mask, targets, inst.lambda);
  GcnGradients grads = gcn_backward(inst.params, inst.prop, tape, loss.d_logits, adaptive);

  std::vector<Matrix> d_wq(inst.mix.hops), d_wk(inst.mix.hops);
  if (adaptive) {
    Matrix d_features = std::move(grads.d_input);
    Matrix d_soft = loss.d_targets;
    for (int t = inst.mix.hops - 1; t >= 0; --t) {
      GeoMix3Gradients g3 = geomix3_backward(tapes[t], d_features, d_soft);
      d_wq[t] = std::move(g3.d_w_query);
      d_wk[t] = std::move(g3.d_w_key);
      d_features = std::move(g3.d_features);
      d_soft = std::move(g3.d_labels);
    }
  }

  GradCheckReport report;
  auto loss_fn = [&]() { return loss_value(inst, inst.params, adaptive); };
  auto add = [&](const std::string& name, Matrix& param, const Matrix& analytic) {
    const double err = check_tensor(param, analytic, loss_fn);
    report.errors.emplace_back(name, err);
    report.max_error = std::max(report.max_error, err);
  };
  add("w0", inst.params.w0, grads.d_w0);
  add("b0", inst.params.b0, grads.d_b0);
  add("w1", inst.params.w1, grads.d_w1);
  add("b1", inst.params.b1, grads.d_b1);
  if (adaptive) {
    for (int t = 0; t < inst.mix.hops; ++t) {
      add("w_query[" + std::to_string(t) + "]", inst.params.attention->w_query[t], d_wq[t]);
      add("w_key[" + std::to_string(t) + "]", inst.params.attention->w_key[t], d_wk[t]);
    }
  }
  return report;
}

}  // namespace

GradCheckReport gradcheck_gcn(std::uint64_t seed) { return run_check(seed, false); }

GradCheckReport gradcheck_geomix3(std::uint64_t seed) { return run_check(seed, true); }

}  // namespace geomix
