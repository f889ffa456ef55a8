#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "geomix/dataset.hpp"
#include "geomix/synthetic.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace geomix;
using namespace geomix::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = GEOMIX_DATA_DIR;

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("geomix_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("load_dataset reads the bundled path fixture") {
  const DatasetBundle bundle = load_dataset(kDataDir / "path3");
  const Graph& g = bundle.graph;
  CHECK(g.num_nodes == 3);
  CHECK(g.num_classes == 2);
  CHECK(g.feature_dim() == 1);
  CHECK(g.edges.size() == 4);  // 2 undirected edges, both directions
  CHECK(g.features(0, 0) == 1.0);
  CHECK(g.features(2, 0) == 4.0);
  CHECK(g.labels == std::vector<int>{0, 1, 0});
  CHECK(bundle.metadata.name == "path3");
  CHECK(bundle.metadata.checksum != 0);
  CHECK(bundle.metadata.split_name.empty());  // no splits directory
}

TEST_CASE("duplicate and reversed edge lines collapse to one stored edge per direction") {
  const fs::path dir = temp_dir("dup_edges");
  std::ofstream(dir / "meta.txt") << "num_nodes=3\nnum_classes=2\nfeature_dim=1\n";
  std::ofstream(dir / "edges.txt") << "0 1\n1 0\n0 1\n1 2\n";
  std::ofstream(dir / "features.csv") << "1\n2\n3\n";
  std::ofstream(dir / "labels.txt") << "0\n1\n0\n";
  const DatasetBundle bundle = load_dataset(dir);
  CHECK(bundle.graph.edges.size() == 4);
}

TEST_CASE("load_dataset raises distinct diagnostics") {
  const fs::path dir = temp_dir("bad_dataset");
  // missing everything
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("missing file"), std::invalid_argument);

  std::ofstream(dir / "meta.txt") << "num_nodes=2\nnum_classes=2\nfeature_dim=1\n";
  std::ofstream(dir / "edges.txt") << "0 2\n";  // index == num_nodes
  std::ofstream(dir / "features.csv") << "1\n2\n";
  std::ofstream(dir / "labels.txt") << "0\n1\n";
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("out of range"), std::invalid_argument);

  std::ofstream(dir / "edges.txt") << "0 1\n";
  std::ofstream(dir / "features.csv") << "1\n2\n3\n";  // row-count mismatch
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("rows"), std::invalid_argument);

  std::ofstream(dir / "features.csv") << "1\n2\n";
  fs::create_directories(dir / "splits" / "default");
  std::ofstream(dir / "splits" / "default" / "train.txt") << "0\n";
  std::ofstream(dir / "splits" / "default" / "val.txt") << "0\n";  // overlaps train
  std::ofstream(dir / "splits" / "default" / "test.txt") << "1\n";
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("overlap"), std::invalid_argument);
}

TEST_CASE("save then load round-trips the graph exactly") {
  Rng rng(3);
  Graph g = random_labeled_graph(rng, 25, 3, 4);
  for (double& v : g.features.data()) v = rng.uniform(-1.0, 1.0) / 3.0;  // non-representable thirds
  const fs::path dir = temp_dir("roundtrip");
  save_dataset(g, dir);
  const DatasetBundle bundle = load_dataset(dir);
  const Graph& back = bundle.graph;
  CHECK(back.num_nodes == g.num_nodes);
  CHECK(back.num_classes == g.num_classes);
  CHECK(max_abs_diff(back.features, g.features) == 0.0);
  CHECK(back.labels == g.labels);
  CHECK(back.train_mask == g.train_mask);
  CHECK(back.val_mask == g.val_mask);
  CHECK(back.test_mask == g.test_mask);
  // stored directed edges agree as sets; loader emits them sorted
  std::set<std::pair<int, int>> expected(g.edges.begin(), g.edges.end());
  std::set<std::pair<int, int>> actual(back.edges.begin(), back.edges.end());
  CHECK(expected == actual);

  // checksum is a pure function of the files
  CHECK(load_dataset(dir).metadata.checksum == bundle.metadata.checksum);
}

TEST_CASE("knn on collinear points picks the nearer neighbor") {
  const Matrix points = Matrix::from_rows({{0.0}, {1.0}, {3.0}});
  const auto edges = knn_graph(points, 1, KnnMetric::kEuclidean);
  const std::set<std::pair<int, int>> expected = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  CHECK(std::set<std::pair<int, int>>(edges.begin(), edges.end()) == expected);
}

TEST_CASE("knn with k = N-1 yields the complete graph") {
  Rng rng(5);
  const Matrix points = random_matrix(6, 3, rng);
  const auto edges = knn_graph(points, 5, KnnMetric::kEuclidean);
  CHECK(edges.size() == 6 * 5);
}

TEST_CASE("knn breaks distance ties toward the lower index") {
  // nodes 1 and 2 coincide; node 0 must pick node 1
  const Matrix points = Matrix::from_rows({{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {5.0, 5.0}});
  const auto edges = knn_graph(points, 1, KnnMetric::kEuclidean);
  const std::set<std::pair<int, int>> got(edges.begin(), edges.end());
  CHECK(got.count({0, 1}) == 1);
  CHECK(got.count({0, 2}) == 0);
}

TEST_CASE("knn output is symmetric and self-loop-free; cosine handles zero rows") {
  Rng rng(7);
  Matrix points = random_matrix(20, 4, rng);
  for (int f = 0; f < 4; ++f) points(11, f) = 0.0;
  for (KnnMetric metric : {KnnMetric::kEuclidean, KnnMetric::kCosine}) {
    const auto edges = knn_graph(points, 3, metric);
    const std::set<std::pair<int, int>> got(edges.begin(), edges.end());
    for (const auto& [u, v] : got) {
      CHECK(u != v);
      CHECK(got.count({v, u}) == 1);
    }
  }
  CHECK_THROWS_AS(knn_graph(points, 20, KnnMetric::kEuclidean), std::invalid_argument);
}

TEST_CASE("make_splits: counts, disjointness, determinism, validation") {
  SyntheticSpec spec = SyntheticSpec::make(3, 0.9, 0.1, 2, 3, 9);
  spec.nodes_per_class = 40;
  const Graph g = make_synthetic_graph(spec);

  const Splits a = make_splits(g, 5, 12, 1234);
  const Splits b = make_splits(g, 5, 12, 1234);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  long train = 0, val = 0, test = 0;
  for (int v = 0; v < g.num_nodes; ++v) {
    train += a.train[v];
    val += a.val[v];
    test += a.test[v];
    CHECK(a.train[v] + a.val[v] + a.test[v] <= 1);
  }
  CHECK(train == 15);
  CHECK(val == 12);
  CHECK(test == g.num_nodes - 15 - 12);

  const Splits capped = make_splits(g, 5, 12, 1234, 20);
  long capped_test = 0;
  for (int v = 0; v < g.num_nodes; ++v) capped_test += capped.test[v];
  CHECK(capped_test == 20);

  const Splits other_seed = make_splits(g, 5, 12, 99);
  CHECK(other_seed.train != a.train);

  CHECK_THROWS_AS(make_splits(g, 41, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_splits(g, 5, 1000, 1), std::invalid_argument);
}

TEST_CASE("export_results writes deterministic metrics and rejects empty history") {
  std::vector<EpochRecord> history;
  for (int e = 1; e <= 3; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.train_loss = 1.0 / e;
    rec.val_acc = 0.5 + 0.1 * e;
    rec.test_acc = 0.45 + 0.1 * e;
    history.push_back(rec);
  }
  const fs::path dir1 = temp_dir("export1");
  const fs::path dir2 = temp_dir("export2");
  export_results(history, {}, dir1);
  export_results(history, {}, dir2);
  const std::string csv = slurp(dir1 / "metrics.csv");
  CHECK(csv == slurp(dir2 / "metrics.csv"));
  CHECK(csv.substr(0, csv.find('\n')) == "epoch,loss,val_acc,test_acc");
  CHECK(csv.find("1,1.000000,0.600000,0.550000") != std::string::npos);

  CHECK_THROWS_AS(export_results({}, {}, dir1), std::invalid_argument);

  std::vector<BoundReport> reports(1);
  reports[0].label = "feature p=0.9";
  reports[0].degree = 5;
  reports[0].threshold = 0.25;
  reports[0].empirical = 0.001;
  reports[0].bound = 0.01;
  reports[0].trials = 1000;
  reports[0].respected = true;
  export_results(history, reports, dir1);
  CHECK(slurp(dir1 / "bounds.tsv").find("respected") != std::string::npos);
}

TEST_CASE("summary file carries per-seed rows plus the aggregate") {
  const fs::path dir = temp_dir("summary");
  const std::vector<std::pair<std::uint64_t, double>> accs = {
      {0, 0.80}, {1, 0.82}, {2, 0.78}, {3, 0.81}, {4, 0.79}};
  write_summary("geomix1", accs, dir / "summary.csv");
  const std::string csv = slurp(dir / "summary.csv");
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 7);  // header + 5 seeds + aggregate
  CHECK(csv.find("geomix1,mean,0.800000,0.015811") != std::string::npos);  // n-1 std
}
