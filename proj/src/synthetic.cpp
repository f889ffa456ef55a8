#include "geomix/synthetic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>
#include <utility>

namespace geomix {

namespace {

constexpr double kNoiseHalfWidth = 0.5;
constexpr int kChunks = 64;

struct WelfordAccumulator {
  long count = 0;
  std::vector<double> mean, m2;

  explicit WelfordAccumulator(int dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  void add(const double* sample) {
    ++count;
    for (size_t j = 0; j < mean.size(); ++j) {
      const double delta = sample[j] - mean[j];
      mean[j] += delta / count;
      m2[j] += delta * (sample[j] - mean[j]);
    }
  }

  void merge(const WelfordAccumulator& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const long n = count + other.count;
    for (size_t j = 0; j < mean.size(); ++j) {
      const double delta = other.mean[j] - mean[j];
      m2[j] += other.m2[j] + delta * delta * static_cast<double>(count) * other.count / n;
      mean[j] += delta * other.count / n;
    }
    count = n;
  }
};

struct ChunkResult {
  WelfordAccumulator acc{0};
  std::vector<long> tail_counts;
};

using SampleFn = void (*)(const SyntheticSpec&, int, Rng&, std::vector<double>&);

void sample_mixed_feature(const SyntheticSpec& spec, int center_class, Rng& rng, std::vector<double>& out) {
  out.assign(spec.feature_dim, 0.0);
  for (int j = 0; j < spec.degree; ++j) {
    const int cls = rng.bernoulli(spec.homophily)
                        ? center_class
                        : (center_class + 1 + rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
    for (int f = 0; f < spec.feature_dim; ++f) {
      double x = spec.class_means(cls, f) + rng.uniform(-kNoiseHalfWidth, kNoiseHalfWidth);
      x = std::clamp(x, -spec.feature_bound, spec.feature_bound);
      out[f] += x;
    }
  }
  for (double& v : out) v /= spec.degree;
}

void sample_mixed_label(const SyntheticSpec& spec, int center_class, Rng& rng, std::vector<double>& out) {
  out.assign(spec.num_classes, 0.0);
  for (int j = 0; j < spec.degree; ++j) {
    const int cls = rng.bernoulli(spec.homophily)
                        ? center_class
                        : (center_class + 1 + rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
    int observed = cls;
    if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise))
      observed = (cls + 1 + rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
    out[observed] += 1.0;
  }
  for (double& v : out) v /= spec.degree;
}

MonteCarloReport run_monte_carlo(const SyntheticSpec& spec, long trials, const std::vector<double>& thresholds,
                              int center_class, int num_threads, SampleFn sample, const Matrix& expected,
                              double bound_scale, double bound_width) {
  spec.validate();
  if (trials < 1) throw std::invalid_argument("verify: trials must be >= 1");
  const int dim = expected.cols();

  std::vector<ChunkResult> chunks(kChunks);
  for (auto& c : chunks) {
    c.acc = WelfordAccumulator(dim);
    c.tail_counts.assign(thresholds.size(), 0);
  }

  std::atomic<int> next_chunk{0};
  auto worker = [&]() {
    std::vector<double> sample_buf;
    for (;;) {
      const int c = next_chunk.fetch_add(1);
      if (c >= kChunks) return;
      const long begin = trials * c / kChunks;
      const long end = trials * (c + 1) / kChunks;
      Rng rng = Rng::substream(spec.seed, streams::kMonteCarlo, static_cast<std::uint64_t>(c));
      for (long i = begin; i < end; ++i) {
        sample(spec, center_class, rng, sample_buf);
        chunks[c].acc.add(sample_buf.data());
        double sq = 0.0;
        for (int j = 0; j < dim; ++j) {
          const double d = sample_buf[j] - expected(0, j);
          sq += d * d;
        }
        const double dist = std::sqrt(sq);
        for (size_t t = 0; t < thresholds.size(); ++t)
          if (dist >= thresholds[t]) ++chunks[c].tail_counts[t];
      }
    }
  };
  const int threads = std::max(1, std::min(num_threads, kChunks));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  WelfordAccumulator total(dim);
  std::vector<long> tail_counts(thresholds.size(), 0);
  for (const auto& c : chunks) {
    total.merge(c.acc);
    for (size_t t = 0; t < thresholds.size(); ++t) tail_counts[t] += c.tail_counts[t];
  }

  MonteCarloReport report;
  report.trials = trials;
  report.expected = expected;
  report.mc_mean = Matrix(1, dim);
  report.se.assign(dim, 0.0);
  report.max_abs_z = 0.0;
  for (int j = 0; j < dim; ++j) {
    report.mc_mean(0, j) = total.mean[j];
    const double var = total.count > 1 ? total.m2[j] / (total.count - 1) : 0.0;
    report.se[j] = std::sqrt(var / total.count);
    const double diff = std::abs(total.mean[j] - expected(0, j));
    const double z = report.se[j] > 0.0 ? diff / report.se[j] : (diff <= 1e-12 ? 0.0 : 1e18);
    report.max_abs_z = std::max(report.max_abs_z, z);
  }
  report.expectation_ok = report.max_abs_z <= 4.0;

  report.tails_ok = true;
  for (size_t t = 0; t < thresholds.size(); ++t) {
    BoundReport br;
    br.degree = spec.degree;
    br.threshold = thresholds[t];
    br.trials = trials;
    br.empirical = static_cast<double>(tail_counts[t]) / trials;
    br.bound = bound_scale * std::exp(-spec.degree * thresholds[t] * thresholds[t] / bound_width);
    const double slack = 3.0 * std::sqrt(br.empirical * (1.0 - br.empirical) / trials);
    br.respected = br.empirical <= br.bound + slack;
    report.tails_ok = report.tails_ok && br.respected;
    report.tails.push_back(br);
  }
  return report;
}

}  // namespace

SyntheticSpec SyntheticSpec::make(int num_classes, double homophily, double label_noise, int feature_dim,
                                  int degree, std::uint64_t seed, double mean_bound, double feature_bound) {
  SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.homophily = homophily;
  spec.label_noise = label_noise;
  spec.feature_bound = feature_bound;
  spec.feature_dim = feature_dim;
  spec.degree = degree;
  spec.seed = seed;
  spec.heterophilic = homophily <= 1.0 / num_classes;
  Rng rng = Rng::substream(seed, streams::kSynthetic, 100);
  spec.class_means = Matrix(num_classes, feature_dim);
  for (double& v : spec.class_means.data()) v = rng.uniform(-mean_bound, mean_bound);
  spec.validate();
  return spec;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synthetic: need at least two classes");
  if (!(homophily > 0.0 && homophily <= 1.0))
    throw std::invalid_argument("synthetic: homophily must be in (0,1]");
  if (!heterophilic && homophily <= 1.0 / num_classes)
    throw std::invalid_argument("synthetic: homophily <= 1/C requires the heterophilic flag");
  if (!(label_noise >= 0.0 && label_noise < 1.0))
    throw std::invalid_argument("synthetic: label noise must be in [0,1)");
  if (feature_bound <= 0.0) throw std::invalid_argument("synthetic: feature bound must be positive");
  if (degree < 1) throw std::invalid_argument("synthetic: degree must be >= 1");
  if (class_means.rows() != num_classes || class_means.cols() != feature_dim)
    throw std::invalid_argument("synthetic: class means shape mismatch");
  for (double v : class_means.data())
    if (std::abs(v) > feature_bound)
      throw std::invalid_argument("synthetic: class mean entry exceeds the feature bound");
}

Neighborhood generate_neighborhood(const SyntheticSpec& spec, int center_class, Rng& rng) {
  spec.validate();
  if (center_class < 0 || center_class >= spec.num_classes)
    throw std::invalid_argument("generate_neighborhood: center class out of range");
  Neighborhood nb;
  nb.labels.resize(spec.degree);
  nb.features = Matrix(spec.degree, spec.feature_dim);
  nb.soft_labels = Matrix(spec.degree, spec.num_classes);
  for (int j = 0; j < spec.degree; ++j) {
    const int cls = rng.bernoulli(spec.homophily)
                        ? center_class
                        : (center_class + 1 + rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
    nb.labels[j] = cls;
    for (int f = 0; f < spec.feature_dim; ++f) {
      double x = spec.class_means(cls, f) + rng.uniform(-kNoiseHalfWidth, kNoiseHalfWidth);
      nb.features(j, f) = std::clamp(x, -spec.feature_bound, spec.feature_bound);
    }
    int observed = cls;
    if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise))
      observed = (cls + 1 + rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
    nb.soft_labels(j, observed) = 1.0;
  }
  return nb;
}

Matrix expected_mixed_feature(const SyntheticSpec& spec, int center_class) {
  Matrix expected(1, spec.feature_dim);
  const double off = (1.0 - spec.homophily) / (spec.num_classes - 1);
  for (int c = 0; c < spec.num_classes; ++c) {
    const double w = c == center_class ? spec.homophily : off;
    for (int f = 0; f < spec.feature_dim; ++f) expected(0, f) += w * spec.class_means(c, f);
  }
  return expected;
}

Matrix expected_mixed_label(const SyntheticSpec& spec, int center_class) {
  const double p = spec.homophily;
  const double eps = spec.label_noise;
  const double cm1 = spec.num_classes - 1;
  Matrix expected(1, spec.num_classes);
  const double same = p * (1.0 - eps) + eps * (1.0 - p) / cm1;
  const double other = (p * eps + (1.0 - p) * (1.0 - eps)) / cm1 +
                       eps * (1.0 - p) * (spec.num_classes - 2) / (cm1 * cm1);
  for (int c = 0; c < spec.num_classes; ++c) expected(0, c) = c == center_class ? same : other;
  return expected;
}

MonteCarloReport verify_feature_expectation(const SyntheticSpec& spec, long trials, const std::vector<double>& thresholds,
                              int center_class, int num_threads) {
  const Matrix expected = expected_mixed_feature(spec, center_class);
  const double scale = 2.0 * spec.feature_dim;
  const double width = 2.0 * spec.feature_bound * spec.feature_bound * spec.feature_dim;
  return run_monte_carlo(spec, trials, thresholds, center_class, num_threads, sample_mixed_feature, expected,
                         scale, width);
}

MonteCarloReport verify_label_expectation(const SyntheticSpec& spec, long trials, const std::vector<double>& thresholds,
                              int center_class, int num_threads) {
  const Matrix expected = expected_mixed_label(spec, center_class);
  const double scale = 2.0 * spec.num_classes;
  const double width = 2.0 * spec.num_classes;
  return run_monte_carlo(spec, trials, thresholds, center_class, num_threads, sample_mixed_label, expected,
                         scale, width);
}

double regularizer_value(const Matrix& features, const Matrix& anchor, const NormalizedWeights& weights,
                         double beta, RegularizerKind kind) {
  (void)kind;  // F1 and F2 share the formula; the anchor choice distinguishes them
  if (!features.same_shape(anchor)) throw std::invalid_argument("regularizer_value: anchor shape mismatch");
  if (features.rows() != weights.num_nodes)
    throw std::invalid_argument("regularizer_value: node count mismatch");
  double proximity = 0.0;
  for (int v = 0; v < features.rows(); ++v)
    for (int f = 0; f < features.cols(); ++f) {
      const double d = features(v, f) - anchor(v, f);
      proximity += d * d;
    }
  double smoothness = 0.0;
  for (int v = 0; v < weights.num_nodes; ++v) {
    for (int e = weights.row_ptr[v]; e < weights.row_ptr[v + 1]; ++e) {
      const int u = weights.col[e];
      double sq = 0.0;
      for (int f = 0; f < features.cols(); ++f) {
        const double d = features(v, f) - features(u, f);
        sq += d * d;
      }
      smoothness += weights.weight[e] * sq;
    }
  }
  return proximity + beta * smoothness;
}

double verify_descent_equivalence(const Graph& graph, double alpha, MixVariant variant, int hops) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("verify_descent_equivalence: alpha must lie strictly inside (0,1)");
  if (variant != MixVariant::kGeoMixI && variant != MixVariant::kGeoMixII)
    throw std::invalid_argument("verify_descent_equivalence: variant must be GeoMix-I or GeoMix-II");

  const NormalizedWeights weights = normalize_adjacency(graph, Scheme::kRowNormalized, false);
  const double tau = alpha / 2.0;
  const double beta = (1.0 - alpha) / alpha;

  // One explicit descent step on the regularizer, differentiating each
  // stored directed edge with respect to its source only (the convention
  // under which the closed-form rearrangement is exact).
  auto gradient_step = [&](const Matrix& h, const Matrix& anchor) {
    Matrix out = h;
    for (int v = 0; v < h.rows(); ++v) {
      for (int f = 0; f < h.cols(); ++f) {
        double grad = 2.0 * (h(v, f) - anchor(v, f));
        for (int e = weights.row_ptr[v]; e < weights.row_ptr[v + 1]; ++e)
          grad += 2.0 * beta * weights.weight[e] * (h(v, f) - h(weights.col[e], f));
        out(v, f) -= tau * grad;
      }
    }
    return out;
  };

  Matrix pseudo(graph.num_nodes, std::max(graph.num_classes, 1));
  for (int v = 0; v < graph.num_nodes; ++v) pseudo(v, 0) = 1.0;
  MixState state = init_mix_state(graph, pseudo);

  double max_dev = 0.0;
  for (int t = 0; t < hops; ++t) {
    const Matrix& anchor = variant == MixVariant::kGeoMixI ? state.features : state.features0;
    Matrix gd = gradient_step(state.features, anchor);
    state = variant == MixVariant::kGeoMixI ? geomix1_step(state, weights, alpha)
                                            : geomix2_step(state, weights, alpha);
    max_dev = std::max(max_dev, max_abs_diff(gd, state.features));
  }
  return max_dev;
}

Graph make_synthetic_graph(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.nodes_per_class < 2) throw std::invalid_argument("synthetic: need at least two nodes per class");
  const int n = spec.num_classes * spec.nodes_per_class;
  Graph g;
  g.num_nodes = n;
  g.num_classes = spec.num_classes;
  g.labels.resize(n);
  for (int v = 0; v < n; ++v) g.labels[v] = v / spec.nodes_per_class;

  Rng edge_rng = Rng::substream(spec.seed, streams::kSynthetic, 0);
  std::set<std::pair<int, int>> undirected;
  const int window = std::min(spec.locality, spec.nodes_per_class / 2);
  auto pick_from_class = [&](int cls, int position, int exclude) {
    int node;
    do {
      int idx;
      if (window > 0) {
        int offset = edge_rng.uniform_int(2 * window + 1) - window;
        idx = ((position + offset) % spec.nodes_per_class + spec.nodes_per_class) % spec.nodes_per_class;
      } else {
        idx = edge_rng.uniform_int(spec.nodes_per_class);
      }
      node = cls * spec.nodes_per_class + idx;
    } while (node == exclude);
    return node;
  };
  for (int v = 0; v < n; ++v) {
    const int cls = g.labels[v];
    const int position = v % spec.nodes_per_class;
    for (int j = 0; j < spec.degree; ++j) {
      int u;
      if (edge_rng.bernoulli(spec.homophily)) {
        u = pick_from_class(cls, position, v);
      } else {
        const int other = (cls + 1 + edge_rng.uniform_int(spec.num_classes - 1)) % spec.num_classes;
        u = pick_from_class(other, position, v);
      }
      undirected.insert({std::min(v, u), std::max(v, u)});
    }
  }
  for (const auto& [u, v] : undirected) {
    g.edges.emplace_back(u, v);
    g.edges.emplace_back(v, u);
  }

  Rng feat_rng = Rng::substream(spec.seed, streams::kSynthetic, 1);
  g.features = Matrix(n, spec.feature_dim);
  if (spec.feature_model == SyntheticSpec::FeatureModel::kUniformBlob) {
    for (int v = 0; v < n; ++v) {
      const int cls = g.labels[v];
      for (int f = 0; f < spec.feature_dim; ++f) {
        double x = spec.class_means(cls, f) + feat_rng.uniform(-kNoiseHalfWidth, kNoiseHalfWidth);
        g.features(v, f) = std::clamp(x, -spec.feature_bound, spec.feature_bound);
      }
    }
  } else {
    // random class signatures over a shared dimension pool, so classes
    // overlap the way vocabularies do
    const int topics = std::min(spec.topics_per_class, spec.feature_dim);
    Rng sig_rng = Rng::substream(spec.seed, streams::kSynthetic, 2);
    std::vector<std::vector<std::uint8_t>> signature(spec.num_classes,
                                                     std::vector<std::uint8_t>(spec.feature_dim, 0));
    for (int c = 0; c < spec.num_classes; ++c) {
      std::vector<int> dims(spec.feature_dim);
      for (int f = 0; f < spec.feature_dim; ++f) dims[f] = f;
      sig_rng.shuffle(dims);
      for (int j = 0; j < topics; ++j) signature[c][dims[j]] = 1;
    }
    for (int v = 0; v < n; ++v) {
      const int cls = g.labels[v];
      for (int f = 0; f < spec.feature_dim; ++f) {
        const double on = signature[cls][f] ? spec.topic_on_prob : spec.background_on_prob;
        g.features(v, f) = feat_rng.bernoulli(on) ? 1.0 : 0.0;
      }
    }
  }
  g.validate();
  return g;
}

Graph make_random_graph(int num_nodes, double edge_prob, int feature_dim, Rng& rng) {
  Graph g;
  g.num_nodes = num_nodes;
  g.num_classes = 2;
  g.labels.assign(num_nodes, 0);
  for (int u = 0; u < num_nodes; ++u)
    for (int v = u + 1; v < num_nodes; ++v)
      if (rng.uniform() < edge_prob) {
        g.edges.emplace_back(u, v);
        g.edges.emplace_back(v, u);
      }
  g.features = Matrix(num_nodes, feature_dim);
  for (double& x : g.features.data()) x = rng.uniform(-1.0, 1.0);
  return g;
}

void write_bound_reports(const std::vector<BoundReport>& reports, std::ostream& out) {
  out << "label\tdegree\tthreshold\tempirical\tbound\ttrials\trespected\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s\t%d\t%.6f\t%.6e\t%.6e\t%ld\t%s\n", r.label.c_str(), r.degree,
                  r.threshold, r.empirical, r.bound, r.trials, r.respected ? "yes" : "no");
    out << buf;
  }
}

}  // namespace geomix
