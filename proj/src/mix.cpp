#include "geomix/mix.hpp"

#include <stdexcept>

#include "geomix/attention.hpp"

namespace geomix {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("mixup: alpha must be in [0,1]");
}

MixState advance(const MixState& state, Matrix features, Matrix soft_labels) {
  MixState next;
  next.features = std::move(features);
  next.soft_labels = std::move(soft_labels);
  next.features0 = state.features0;
  next.soft_labels0 = state.soft_labels0;
  next.hop = state.hop + 1;
  return next;
}

}  // namespace

void MixConfig::validate() const {
  check_alpha(alpha);
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("mixup: eta must be in [0,1]");
  if (hops < 1) throw std::invalid_argument("mixup: hops must be >= 1");
}

MixState init_mix_state(const Graph& graph, const Matrix& pseudo_labels) {
  if (pseudo_labels.rows() != graph.num_nodes)
    throw std::invalid_argument("init_mix_state: pseudo label row count does not match node count");
  if (graph.num_classes > 0 && pseudo_labels.cols() != graph.num_classes)
    throw std::invalid_argument("init_mix_state: pseudo label column count does not match class count");
  MixState state;
  state.features = graph.features;
  state.soft_labels = pseudo_labels;
  state.features0 = graph.features;
  state.soft_labels0 = pseudo_labels;
  state.hop = 0;
  return state;
}

MixState basic_step(const MixState& state, const NormalizedWeights& weights) {
  return advance(state, aggregate(weights, state.features), aggregate(weights, state.soft_labels));
}

MixState geomix1_step(const MixState& state, const NormalizedWeights& weights, double alpha) {
  check_alpha(alpha);
  Matrix f = linear_combo(alpha, state.features, 1.0 - alpha, aggregate(weights, state.features));
  Matrix y = linear_combo(alpha, state.soft_labels, 1.0 - alpha, aggregate(weights, state.soft_labels));
  return advance(state, std::move(f), std::move(y));
}

MixState geomix2_step(const MixState& state, const NormalizedWeights& weights, double alpha) {
  check_alpha(alpha);
  if (state.features0.empty() || !state.features0.same_shape(state.features))
    throw std::invalid_argument("geomix2_step: hop-0 state missing");
  Matrix f = linear_combo(alpha, state.features0, 1.0 - alpha, aggregate(weights, state.features));
  Matrix y = linear_combo(alpha, state.soft_labels0, 1.0 - alpha, aggregate(weights, state.soft_labels));
  return advance(state, std::move(f), std::move(y));
}

MixState run_mixup(const Graph& graph, const Matrix& pseudo_labels, const MixConfig& config,
                   const NormalizedWeights& weights, const AttentionParams* attention,
                   std::vector<GeoMix3Tape>* tapes) {
  config.validate();
  if (config.variant == MixVariant::kGeoMixIII && attention == nullptr)
    throw std::invalid_argument("run_mixup: GeoMix-III requires attention params");

  MixState state = init_mix_state(graph, pseudo_labels);
  for (int t = 0; t < config.hops; ++t) {
    switch (config.variant) {
      case MixVariant::kBasic:
        state = basic_step(state, weights);
        break;
      case MixVariant::kGeoMixI:
        state = geomix1_step(state, weights, config.alpha);
        break;
      case MixVariant::kGeoMixII:
        state = geomix2_step(state, weights, config.alpha);
        break;
      case MixVariant::kGeoMixIII: {
        GeoMix3Tape* tape = nullptr;
        if (tapes != nullptr) {
          tapes->emplace_back();
          tape = &tapes->back();
        }
        state = geomix3_step(state, weights, *attention, config.alpha, config.eta, tape);
        break;
      }
    }
  }
  return state;
}

MixState run_mixup(const Graph& graph, const Matrix& pseudo_labels, const MixConfig& config,
                   const AttentionParams* attention, std::vector<GeoMix3Tape>* tapes) {
  NormalizedWeights weights = normalize_adjacency(graph, config.scheme, /*add_self_loops=*/false);
  return run_mixup(graph, pseudo_labels, config, weights, attention, tapes);
}

}  // namespace geomix
