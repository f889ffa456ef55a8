#pragma once

#include <vector>

#include "geomix/graph.hpp"

namespace geomix {

struct AttentionParams;  // attention.hpp
struct GeoMix3Tape;

enum class MixVariant { kBasic, kGeoMixI, kGeoMixII, kGeoMixIII };

struct MixConfig {
  MixVariant variant = MixVariant::kGeoMixI;
  double alpha = 0.5;  // locality-reinforcement weight
  int hops = 2;        // consecutive mixup operations K
  double eta = 0.5;    // GeoMix-III graph-branch weight
  Scheme scheme = Scheme::kRowNormalized;

  void validate() const;
};

// Evolving (features, soft labels) pair, double-buffered per hop. Hop-0
// copies are retained for the residual used by GeoMix-II.
struct MixState {
  Matrix features;     // H^(t), N x F
  Matrix soft_labels;  // Ybar^(t), N x C
  Matrix features0;
  Matrix soft_labels0;
  int hop = 0;
};

// features = graph features, soft labels = pseudo labels, hop = 0.
MixState init_mix_state(const Graph& graph, const Matrix& pseudo_labels);

// h'_v = sum_u e_vu h_u, applied identically to features and soft labels.
MixState basic_step(const MixState& state, const NormalizedWeights& weights);

// h'_v = alpha h_v + (1-alpha) sum_u e_vu h_u  (residual on current state)
MixState geomix1_step(const MixState& state, const NormalizedWeights& weights, double alpha);

// h'_v = alpha h0_v + (1-alpha) sum_u e_vu h_u  (residual on hop-0 state)
MixState geomix2_step(const MixState& state, const NormalizedWeights& weights, double alpha);

// Applies the configured step config.hops times with prebuilt weights.
// GeoMix-III requires attention params (one projection pair per hop); when
// tapes is non-null one tape per hop is appended for the reverse pass.
MixState run_mixup(const Graph& graph, const Matrix& pseudo_labels, const MixConfig& config,
                   const NormalizedWeights& weights, const AttentionParams* attention = nullptr,
                   std::vector<GeoMix3Tape>* tapes = nullptr);

// Convenience overload: builds mixing weights from config.scheme, no
// self-loops (isolated nodes still get the implicit one).
MixState run_mixup(const Graph& graph, const Matrix& pseudo_labels, const MixConfig& config,
                   const AttentionParams* attention = nullptr, std::vector<GeoMix3Tape>* tapes = nullptr);

}  // namespace geomix
