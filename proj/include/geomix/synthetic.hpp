#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "geomix/graph.hpp"
#include "geomix/mix.hpp"
#include "geomix/rng.hpp"

namespace geomix {

// Parameters of a synthetic graph with class-conditional features, noisy
// soft labels, and homophily p: a neighbor shares the center's class with
// probability p and lands in any other class with probability (1-p)/(C-1).
struct SyntheticSpec {
  int num_classes = 2;
  double homophily = 0.9;     // p
  double label_noise = 0.1;   // epsilon: soft label resampled to a wrong class with this probability
  double feature_bound = 1.0; // B: |feature entries| <= B
  int feature_dim = 1;
  Matrix class_means;         // C x F, entries within [-B + noise half-width, B - noise half-width]
  int degree = 5;             // neighbors per sampled neighborhood / draws per node
  int nodes_per_class = 100;
  std::uint64_t seed = 0;
  bool heterophilic = false;  // permit p <= 1/C
  // Graph generation only: 0 draws partners uniformly inside the chosen
  // class; w > 0 draws them from a ring window of +-w positions, giving the
  // graph local structure and a large diameter. Neighbor label frequencies
  // are unchanged either way.
  int locality = 0;
  // Graph generation only. kUniformBlob draws every dimension uniformly
  // around the class mean (the model the expectation checks assume).
  // kSparseTopics gives each class a disjoint block of topic dimensions and
  // activates them sparsely, so a single node carries only a fragment of
  // its class signature (dimensions stay independent and bounded by 1).
  enum class FeatureModel { kUniformBlob, kSparseTopics };
  FeatureModel feature_model = FeatureModel::kUniformBlob;
  int topics_per_class = 30;
  double topic_on_prob = 0.15;
  double background_on_prob = 0.015;

  // Means drawn uniformly with |entries| <= mean_bound (must keep the
  // uniform half-width 0.5 feature noise inside [-B, B]).
  static SyntheticSpec make(int num_classes, double homophily, double label_noise, int feature_dim,
                            int degree, std::uint64_t seed, double mean_bound = 0.45,
                            double feature_bound = 1.0);

  void validate() const;
};

struct Neighborhood {
  std::vector<int> labels;  // degree entries
  Matrix features;          // degree x F
  Matrix soft_labels;       // degree x C, one-hot rows
};

// Draws one neighborhood of a node with the given class: labels i.i.d. per
// the homophily rule, features uniform per dimension around the class mean
// (half-width 0.5, truncated to [-B, B]), soft labels one-hot of a class
// resampled with noise epsilon.
Neighborhood generate_neighborhood(const SyntheticSpec& spec, int center_class, Rng& rng);

// Closed-form expectations of the neighbor average after one basic mixup
// with weights 1/deg.
Matrix expected_mixed_feature(const SyntheticSpec& spec, int center_class);  // 1 x F
Matrix expected_mixed_label(const SyntheticSpec& spec, int center_class);  // 1 x C

struct BoundReport {
  std::string label;
  int degree = 0;
  double threshold = 0.0;
  double empirical = 0.0;  // tail probability estimate
  double bound = 0.0;      // closed-form value
  long trials = 0;
  bool respected = false;  // empirical <= bound + 3 sigma sampling slack
};

struct MonteCarloReport {
  Matrix expected;  // 1 x dim closed form
  Matrix mc_mean;   // 1 x dim Monte Carlo
  std::vector<double> se;
  double max_abs_z = 0.0;       // max |mc - expected| / se over dimensions
  bool expectation_ok = false;  // max_abs_z <= 4
  std::vector<BoundReport> tails;
  bool tails_ok = false;
  long trials = 0;
};

// Monte Carlo check of the mixed-feature expectation and its tail bound
// 2F exp(-deg t^2 / (2 B^2 F)). Trials are split into fixed chunks with
// independent substreams, so results do not depend on num_threads.
MonteCarloReport verify_feature_expectation(const SyntheticSpec& spec, long trials, const std::vector<double>& thresholds,
                              int center_class = 0, int num_threads = 1);

// Same for the mixed-label expectation with bound 2C exp(-deg t^2 / (2C)).
MonteCarloReport verify_label_expectation(const SyntheticSpec& spec, long trials, const std::vector<double>& thresholds,
                              int center_class = 0, int num_threads = 1);

enum class RegularizerKind { kF1, kF2 };

// sum_u |h_u - anchor_u|^2 + beta * sum over stored directed edges of
// e_uv |h_u - h_v|^2 (each undirected edge counted twice).
double regularizer_value(const Matrix& features, const Matrix& anchor, const NormalizedWeights& weights,
                         double beta, RegularizerKind kind);

// Runs `hops` mixup steps and, at each hop, the explicit gradient-descent
// step on the matching regularizer (tau = alpha/2, beta = (1-alpha)/alpha;
// F1 anchors at the current state, F2 at the hop-0 state). Returns the max
// elementwise deviation between the two routes. alpha must lie in (0,1).
double verify_descent_equivalence(const Graph& graph, double alpha, MixVariant variant, int hops = 3);

// Full graph drawn from the given parameters: per node, `degree` neighbor
// draws (same class w.p. p), symmetrized and deduplicated; features as in
// generate_neighborhood. Masks are left empty.
Graph make_synthetic_graph(const SyntheticSpec& spec);

// Erdos-Renyi-style helper for property tests and equivalence sweeps.
Graph make_random_graph(int num_nodes, double edge_prob, int feature_dim, Rng& rng);

void write_bound_reports(const std::vector<BoundReport>& reports, std::ostream& out);

}  // namespace geomix
