#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "geomix/mix.hpp"
#include "geomix/synthetic.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace geomix;
using namespace geomix::testing;

namespace {

SyntheticSpec two_class_spec(double p, double eps, std::uint64_t seed = 1) {
  SyntheticSpec spec = SyntheticSpec::make(2, p, eps, 1, 5, seed);
  spec.class_means = Matrix::from_rows({{0.4}, {-0.4}});
  return spec;
}

// independent route to the mixed-label expectation: enumerate the neighbor
// class and the resampled observation class, both with explicit
// probabilities
Matrix enumerate_label_expectation(const SyntheticSpec& spec, int center_class) {
  Matrix expected(1, spec.num_classes);
  for (int neighbor = 0; neighbor < spec.num_classes; ++neighbor) {
    const double p_neighbor = neighbor == center_class
                                  ? spec.homophily
                                  : (1.0 - spec.homophily) / (spec.num_classes - 1);
    for (int observed = 0; observed < spec.num_classes; ++observed) {
      const double p_observed = observed == neighbor
                                    ? 1.0 - spec.label_noise
                                    : spec.label_noise / (spec.num_classes - 1);
      expected(0, observed) += p_neighbor * p_observed;
    }
  }
  return expected;
}

Graph cycle_graph(int n, int feature_dim, Rng& rng) {
  Graph g;
  g.num_nodes = n;
  g.num_classes = 2;
  g.labels.assign(n, 0);
  for (int v = 0; v < n; ++v) {
    const int u = (v + 1) % n;
    g.edges.emplace_back(v, u);
    g.edges.emplace_back(u, v);
  }
  g.features = random_matrix(n, feature_dim, rng);
  return g;
}

}  // namespace

TEST_CASE("spec validation: homophily, noise, mean bounds") {
  CHECK_THROWS_AS(two_class_spec(0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(two_class_spec(0.9, 1.0), std::invalid_argument);

  SyntheticSpec heterophilic = two_class_spec(0.4, 0.1);
  CHECK(heterophilic.heterophilic);  // p <= 1/C flagged automatically
  heterophilic.heterophilic = false;
  CHECK_THROWS_AS(heterophilic.validate(), std::invalid_argument);

  SyntheticSpec bad_mean = two_class_spec(0.9, 0.1);
  bad_mean.class_means(0, 0) = 2.0;
  CHECK_THROWS_AS(bad_mean.validate(), std::invalid_argument);

  // noiseless labels are allowed
  SyntheticSpec noiseless = two_class_spec(0.9, 0.0);
  noiseless.validate();
}

TEST_CASE("neighborhood draws respect the degenerate limits") {
  SyntheticSpec spec = two_class_spec(1.0, 0.0);
  Rng rng(2);
  const Neighborhood nb = generate_neighborhood(spec, 0, rng);
  REQUIRE(static_cast<int>(nb.labels.size()) == spec.degree);
  for (int j = 0; j < spec.degree; ++j) {
    CHECK(nb.labels[j] == 0);                 // p = 1: every neighbor shares the class
    CHECK(nb.soft_labels(j, 0) == 1.0);       // eps = 0: exact one-hot
    CHECK(nb.soft_labels(j, 1) == 0.0);
    CHECK(std::abs(nb.features(j, 0) - 0.4) <= 0.5);
  }
}

TEST_CASE("mixed-feature expectation formula") {
  const SyntheticSpec spec = two_class_spec(0.7, 0.1);
  CHECK(expected_mixed_feature(spec, 0)(0, 0) == doctest::Approx(0.7 * 0.4 + 0.3 * -0.4));

  const SyntheticSpec pure = two_class_spec(1.0, 0.1);
  CHECK(expected_mixed_feature(pure, 0)(0, 0) == doctest::Approx(0.4));
  CHECK(expected_mixed_feature(pure, 1)(0, 0) == doctest::Approx(-0.4));
}

TEST_CASE("mixed-label expectation: point value, simplex identity, enumeration route") {
  const SyntheticSpec spec = two_class_spec(0.9, 0.1);
  const Matrix expected = expected_mixed_label(spec, 0);
  CHECK(expected(0, 0) == doctest::Approx(0.82));
  CHECK(expected(0, 1) == doctest::Approx(0.18));

  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    SyntheticSpec random_spec = SyntheticSpec::make(2 + rng.uniform_int(5), 0.05 + 0.95 * rng.uniform(),
                                                    0.9 * rng.uniform(), 1, 5, rng.next());
    random_spec.heterophilic = true;
    const Matrix closed = expected_mixed_label(random_spec, 0);
    const Matrix enumerated = enumerate_label_expectation(random_spec, 0);
    CHECK(max_abs_diff(closed, enumerated) <= 1e-12);
    double sum = 0.0;
    for (int c = 0; c < random_spec.num_classes; ++c) sum += closed(0, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("Monte Carlo agrees with both expectation formulas") {
  const SyntheticSpec spec = two_class_spec(0.9, 0.1, 77);
  const MonteCarloReport features = verify_feature_expectation(spec, 20000, {0.5});
  CHECK(features.expectation_ok);
  CHECK(features.trials == 20000);

  const MonteCarloReport labels = verify_label_expectation(spec, 20000, {0.5});
  CHECK(labels.expectation_ok);
  CHECK(labels.mc_mean(0, 0) == doctest::Approx(0.82).epsilon(0.02));
  CHECK(labels.mc_mean(0, 1) == doctest::Approx(0.18).epsilon(0.1));
}

TEST_CASE("tail bounds hold on a small grid") {
  Rng rng(9);
  for (double p : {0.6, 0.9}) {
    for (int c : {2, 4}) {
      SyntheticSpec spec = SyntheticSpec::make(c, p, 0.1, 2, 8, rng.next());
      const double bf = spec.feature_bound * std::sqrt(2.0);
      const MonteCarloReport th1 = verify_feature_expectation(spec, 20000, {0.25 * bf, 0.5 * bf, bf});
      CHECK(th1.tails_ok);
      const double bc = std::sqrt(static_cast<double>(c));
      const MonteCarloReport th2 = verify_label_expectation(spec, 20000, {0.25 * bc, 0.5 * bc, bc});
      CHECK(th2.tails_ok);
    }
  }
}

TEST_CASE("Monte Carlo standard error shrinks like 1/sqrt(trials)") {
  const SyntheticSpec spec = two_class_spec(0.8, 0.2, 31);
  const MonteCarloReport small = verify_feature_expectation(spec, 20000, {});
  const MonteCarloReport big = verify_feature_expectation(spec, 80000, {});
  const double ratio = big.se[0] / small.se[0];
  CHECK(ratio > 0.4);
  CHECK(ratio < 0.6);
}

TEST_CASE("chunked Monte Carlo is independent of the thread count") {
  const SyntheticSpec spec = two_class_spec(0.85, 0.15, 57);
  const MonteCarloReport serial = verify_feature_expectation(spec, 30000, {0.3, 0.6}, 0, 1);
  const MonteCarloReport parallel = verify_feature_expectation(spec, 30000, {0.3, 0.6}, 0, 4);
  CHECK(serial.mc_mean(0, 0) == parallel.mc_mean(0, 0));
  CHECK(serial.se[0] == parallel.se[0]);
  for (size_t i = 0; i < serial.tails.size(); ++i)
    CHECK(serial.tails[i].empirical == parallel.tails[i].empirical);
}

TEST_CASE("regularizer value: zero case, path-graph oracle, beta linearity") {
  const Graph g = path3_graph();
  const NormalizedWeights w = normalize_adjacency(g, Scheme::kRowNormalized, false);

  Matrix uniform(3, 1);
  for (int v = 0; v < 3; ++v) uniform(v, 0) = 1.25;
  CHECK(regularizer_value(uniform, uniform, w, 1.0, RegularizerKind::kF1) == 0.0);

  // directed-edge oracle: 1*(1-2)^2 + 0.5*(2-1)^2 + 0.5*(2-4)^2 + 1*(4-2)^2 = 7.5
  const double value = regularizer_value(g.features, g.features, w, 1.0, RegularizerKind::kF1);
  CHECK(value == doctest::Approx(7.5).epsilon(1e-12));

  const double doubled = regularizer_value(g.features, g.features, w, 2.0, RegularizerKind::kF1);
  CHECK(doubled == doctest::Approx(2.0 * value).epsilon(1e-12));

  Matrix anchor = g.features;
  anchor(0, 0) += 1.0;
  const double shifted = regularizer_value(g.features, anchor, w, 1.0, RegularizerKind::kF2);
  CHECK(shifted == doctest::Approx(value + 1.0).epsilon(1e-12));
}

TEST_CASE("descent equivalence on the worked path-graph cases") {
  const Graph g = path3_graph();
  CHECK(verify_descent_equivalence(g, 0.5, MixVariant::kGeoMixI) <= 1e-9);
  CHECK(verify_descent_equivalence(g, 0.5, MixVariant::kGeoMixII) <= 1e-9);

  // explicit first-step values: the gradient route must reproduce the mixup
  // ones computed in the mix tests
  const NormalizedWeights w = normalize_adjacency(g, Scheme::kRowNormalized, false);
  const double tau = 0.25, beta = 1.0;
  Matrix step = g.features;
  for (int v = 0; v < 3; ++v) {
    double grad = 0.0;
    for (int e = w.row_ptr[v]; e < w.row_ptr[v + 1]; ++e)
      grad += 2.0 * beta * w.weight[e] * (g.features(v, 0) - g.features(w.col[e], 0));
    step(v, 0) -= tau * grad;
  }
  CHECK(step(0, 0) == doctest::Approx(1.5));
  CHECK(step(1, 0) == doctest::Approx(2.25));
  CHECK(step(2, 0) == doctest::Approx(3.0));
}

TEST_CASE("descent equivalence across random graphs and alphas") {
  Rng rng(111);
  for (int trial = 0; trial < 12; ++trial) {
    const Graph g = make_random_graph(3 + rng.uniform_int(60), 0.2, 1 + rng.uniform_int(4), rng);
    for (double alpha : {0.2, 0.5, 0.8}) {
      CHECK(verify_descent_equivalence(g, alpha, MixVariant::kGeoMixI) <= 1e-9);
      CHECK(verify_descent_equivalence(g, alpha, MixVariant::kGeoMixII) <= 1e-9);
    }
  }
  const Graph g = path3_graph();
  CHECK_THROWS_AS(verify_descent_equivalence(g, 1.0, MixVariant::kGeoMixI), std::invalid_argument);
  CHECK_THROWS_AS(verify_descent_equivalence(g, 0.5, MixVariant::kBasic), std::invalid_argument);
}

TEST_CASE("finite differences confirm the step on regular graphs") {
  // On a regular graph the row-normalized weights are symmetric, so one
  // mixup step equals descent on prox + (beta/2) * directed smoothness with
  // the true (finite-difference) gradient.
  Rng rng(13);
  for (int n : {6, 11}) {
    Graph g = cycle_graph(n, 2, rng);
    const NormalizedWeights w = normalize_adjacency(g, Scheme::kRowNormalized, false);
    const double alpha = 0.5, tau = alpha / 2.0, beta = (1.0 - alpha) / alpha;
    const Matrix anchor = g.features;
    Matrix h = g.features;
    auto value = [&]() { return regularizer_value(h, anchor, w, beta / 2.0, RegularizerKind::kF1); };
    Matrix fd_step = h;
    for (int v = 0; v < n; ++v)
      for (int f = 0; f < 2; ++f) fd_step(v, f) -= tau * fd_entry(h, v, f, value);

    const Matrix pseudo = random_simplex_rows(n, 2, rng);
    const MixState mixed = geomix1_step(init_mix_state(g, pseudo), w, alpha);
    CHECK(max_abs_diff(fd_step, mixed.features) <= 1e-7);
  }
}

TEST_CASE("repeated GeoMix-I steps descend the regularizer on regular graphs") {
  Rng rng(29);
  for (int n : {8, 16}) {
    Graph g = cycle_graph(n, 3, rng);
    const NormalizedWeights w = normalize_adjacency(g, Scheme::kRowNormalized, false);
    for (double alpha : {0.2, 0.35, 0.5}) {
      const double beta = (1.0 - alpha) / alpha;
      MixState state = init_mix_state(g, random_simplex_rows(n, 2, rng));
      for (int t = 0; t < 5; ++t) {
        const MixState next = geomix1_step(state, w, alpha);
        const double before = regularizer_value(state.features, state.features, w, beta, RegularizerKind::kF1);
        const double after = regularizer_value(next.features, state.features, w, beta, RegularizerKind::kF1);
        CHECK(after <= before + 1e-12);
        state = next;
      }
    }
  }
}

TEST_CASE("synthetic graphs satisfy the declared structure") {
  SyntheticSpec spec = SyntheticSpec::make(3, 0.85, 0.1, 4, 3, 5);
  spec.nodes_per_class = 50;
  const Graph g = make_synthetic_graph(spec);
  CHECK(g.num_nodes == 150);
  g.validate();
  long same = 0, total = 0;
  for (const auto& [u, v] : g.edges) {
    CHECK(u != v);
    same += g.labels[u] == g.labels[v];
    ++total;
  }
  const double fraction = static_cast<double>(same) / total;
  CHECK(fraction > 0.7);  // homophily 0.85 up to symmetrization effects
  CHECK(fraction < 0.95);
  for (int v = 0; v < g.num_nodes; ++v)
    for (int f = 0; f < 4; ++f) CHECK(std::abs(g.features(v, f)) <= spec.feature_bound);

  const Graph again = make_synthetic_graph(spec);
  CHECK(again.edges == g.edges);
  CHECK(max_abs_diff(again.features, g.features) == 0.0);
}
