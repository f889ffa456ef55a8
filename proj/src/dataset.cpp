#include "geomix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace geomix {

namespace fs = std::filesystem;

namespace {

std::ifstream open_or_throw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("dataset: missing file " + path.string());
  return in;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

int parse_int(const std::string& s, const std::string& context) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("dataset: bad integer '" + s + "' in " + context);
  }
}

Mask indices_to_mask(const fs::path& path, int num_nodes) {
  Mask mask(num_nodes, 0);
  for (const auto& line : read_lines(path)) {
    const int v = parse_int(line, path.string());
    if (v < 0 || v >= num_nodes)
      throw std::invalid_argument("dataset: split index " + std::to_string(v) + " out of range in " +
                                  path.string());
    mask[v] = 1;
  }
  return mask;
}

void format_double(std::string& out, double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  out += buf;
}

}  // namespace

std::uint64_t fnv1a_file(const fs::path& path, std::uint64_t hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("dataset: missing file " + path.string());
  char c;
  while (in.get(c)) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

DatasetBundle load_dataset(const fs::path& dir, const std::string& split) {
  DatasetBundle bundle;
  Graph& g = bundle.graph;

  std::map<std::string, std::string> meta;
  for (const auto& line : read_lines(dir / "meta.txt")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("dataset: bad meta line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"num_nodes", "num_classes", "feature_dim"})
    if (!meta.count(key)) throw std::invalid_argument(std::string("dataset: meta.txt missing ") + key);
  g.num_nodes = parse_int(meta["num_nodes"], "meta.txt");
  g.num_classes = parse_int(meta["num_classes"], "meta.txt");
  const int feature_dim = parse_int(meta["feature_dim"], "meta.txt");

  std::set<std::pair<int, int>> undirected;
  for (const auto& line : read_lines(dir / "edges.txt")) {
    std::istringstream ss(line);
    int u, v;
    if (!(ss >> u >> v)) throw std::invalid_argument("dataset: bad edge line '" + line + "'");
    if (u < 0 || u >= g.num_nodes || v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("dataset: edge endpoint out of range in line '" + line + "'");
    undirected.insert({std::min(u, v), std::max(u, v)});
  }
  for (const auto& [u, v] : undirected) {
    g.edges.emplace_back(u, v);
    if (u != v) g.edges.emplace_back(v, u);
  }

  const auto feature_lines = read_lines(dir / "features.csv");
  if (static_cast<int>(feature_lines.size()) != g.num_nodes)
    throw std::invalid_argument("dataset: features.csv has " + std::to_string(feature_lines.size()) +
                                " rows, expected " + std::to_string(g.num_nodes));
  g.features = Matrix(g.num_nodes, feature_dim);
  for (int r = 0; r < g.num_nodes; ++r) {
    std::istringstream ss(feature_lines[r]);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= feature_dim)
        throw std::invalid_argument("dataset: features.csv row " + std::to_string(r) + " has extra columns");
      try {
        g.features(r, c) = std::stod(cell);
      } catch (const std::exception&) {
        throw std::invalid_argument("dataset: bad feature value '" + cell + "' at row " + std::to_string(r));
      }
      ++c;
    }
    if (c != feature_dim)
      throw std::invalid_argument("dataset: features.csv row " + std::to_string(r) + " has " +
                                  std::to_string(c) + " columns, expected " + std::to_string(feature_dim));
  }

  const auto label_lines = read_lines(dir / "labels.txt");
  if (static_cast<int>(label_lines.size()) != g.num_nodes)
    throw std::invalid_argument("dataset: labels.txt has " + std::to_string(label_lines.size()) +
                                " rows, expected " + std::to_string(g.num_nodes));
  g.labels.resize(g.num_nodes);
  for (int r = 0; r < g.num_nodes; ++r) {
    const int y = parse_int(label_lines[r], "labels.txt");
    if (y < 0 || y >= g.num_classes)
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " out of range at row " +
                                  std::to_string(r));
    g.labels[r] = y;
  }

  g.train_mask.assign(g.num_nodes, 0);
  g.val_mask.assign(g.num_nodes, 0);
  g.test_mask.assign(g.num_nodes, 0);
  const fs::path split_dir = dir / "splits" / split;
  if (fs::exists(split_dir)) {
    g.train_mask = indices_to_mask(split_dir / "train.txt", g.num_nodes);
    g.val_mask = indices_to_mask(split_dir / "val.txt", g.num_nodes);
    g.test_mask = indices_to_mask(split_dir / "test.txt", g.num_nodes);
    bundle.metadata.split_name = split;
  }

  g.validate();

  bundle.metadata.name = dir.filename().string();
  bundle.metadata.source_dir = dir;
  for (const auto& [key, value] : meta)
    if (key != "num_nodes" && key != "num_classes" && key != "feature_dim")
      bundle.metadata.construction[key] = value;
  std::uint64_t checksum = 1469598103934665603ULL;
  for (const char* f : {"meta.txt", "edges.txt", "features.csv", "labels.txt"})
    checksum = fnv1a_file(dir / f, checksum);
  bundle.metadata.checksum = checksum;
  return bundle;
}

void save_dataset(const Graph& graph, const fs::path& dir) {
  graph.validate();
  fs::create_directories(dir);

  std::string meta;
  meta += "num_nodes=" + std::to_string(graph.num_nodes) + "\n";
  meta += "num_classes=" + std::to_string(graph.num_classes) + "\n";
  meta += "feature_dim=" + std::to_string(graph.feature_dim()) + "\n";
  std::ofstream(dir / "meta.txt") << meta;

  std::set<std::pair<int, int>> undirected;
  for (const auto& [u, v] : graph.edges) undirected.insert({std::min(u, v), std::max(u, v)});
  std::string edges;
  for (const auto& [u, v] : undirected) edges += std::to_string(u) + " " + std::to_string(v) + "\n";
  std::ofstream(dir / "edges.txt") << edges;

  std::string features;
  for (int r = 0; r < graph.num_nodes; ++r) {
    for (int c = 0; c < graph.feature_dim(); ++c) {
      if (c) features += ',';
      format_double(features, graph.features(r, c), "%.17g");
    }
    features += '\n';
  }
  std::ofstream(dir / "features.csv") << features;

  std::string labels;
  for (int y : graph.labels) labels += std::to_string(y) + "\n";
  std::ofstream(dir / "labels.txt") << labels;

  auto write_mask = [&](const Mask& mask, const char* name) {
    std::string out;
    for (int v = 0; v < graph.num_nodes; ++v)
      if (mask[v]) out += std::to_string(v) + "\n";
    std::ofstream(dir / "splits" / "default" / name) << out;
  };
  bool any_mask = false;
  for (int v = 0; v < graph.num_nodes; ++v)
    any_mask = any_mask || graph.train_mask[v] || graph.val_mask[v] || graph.test_mask[v];
  if (any_mask) {
    fs::create_directories(dir / "splits" / "default");
    write_mask(graph.train_mask, "train.txt");
    write_mask(graph.val_mask, "val.txt");
    write_mask(graph.test_mask, "test.txt");
  }
}

std::vector<std::pair<int, int>> knn_graph(const Matrix& features, int k, KnnMetric metric) {
  const int n = features.rows();
  if (k < 1 || k >= n) throw std::invalid_argument("knn_graph: need 1 <= k < num points");

  std::vector<double> norms(n, 0.0);
  if (metric == KnnMetric::kCosine) {
    for (int i = 0; i < n; ++i) {
      double sq = 0.0;
      for (int f = 0; f < features.cols(); ++f) sq += features(i, f) * features(i, f);
      norms[i] = std::sqrt(sq);
    }
  }
  auto distance = [&](int a, int b) {
    if (metric == KnnMetric::kEuclidean) {
      double sq = 0.0;
      for (int f = 0; f < features.cols(); ++f) {
        const double d = features(a, f) - features(b, f);
        sq += d * d;
      }
      return sq;
    }
    if (norms[a] < 1e-12 || norms[b] < 1e-12) return 1.0;
    double dot = 0.0;
    for (int f = 0; f < features.cols(); ++f) dot += features(a, f) * features(b, f);
    return 1.0 - dot / (norms[a] * norms[b]);
  };

  std::set<std::pair<int, int>> undirected;
  std::vector<std::pair<double, int>> candidates;
  for (int i = 0; i < n; ++i) {
    candidates.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) candidates.emplace_back(distance(i, j), j);
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    for (int j = 0; j < k; ++j) {
      const int other = candidates[j].second;
      undirected.insert({std::min(i, other), std::max(i, other)});
    }
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& [u, v] : undirected) {
    edges.emplace_back(u, v);
    edges.emplace_back(v, u);
  }
  return edges;
}

Splits make_splits(const Graph& graph, int per_class_train, int val_total, std::uint64_t seed,
                   int test_total) {
  if (per_class_train < 1) throw std::invalid_argument("make_splits: per_class_train must be >= 1");
  Splits splits;
  splits.train.assign(graph.num_nodes, 0);
  splits.val.assign(graph.num_nodes, 0);
  splits.test.assign(graph.num_nodes, 0);

  std::vector<std::vector<int>> by_class(graph.num_classes);
  for (int v = 0; v < graph.num_nodes; ++v) {
    if (graph.labels[v] < 0 || graph.labels[v] >= graph.num_classes)
      throw std::invalid_argument("make_splits: node " + std::to_string(v) + " has no valid label");
    by_class[graph.labels[v]].push_back(v);
  }

  Rng rng = Rng::substream(seed, streams::kSplits);
  std::vector<int> remainder;
  for (int c = 0; c < graph.num_classes; ++c) {
    auto& nodes = by_class[c];
    if (static_cast<int>(nodes.size()) < per_class_train)
      throw std::invalid_argument("make_splits: class " + std::to_string(c) + " has only " +
                                  std::to_string(nodes.size()) + " nodes, needs " +
                                  std::to_string(per_class_train));
    rng.shuffle(nodes);
    for (int i = 0; i < per_class_train; ++i) splits.train[nodes[i]] = 1;
    for (size_t i = per_class_train; i < nodes.size(); ++i) remainder.push_back(nodes[i]);
  }

  if (val_total > static_cast<int>(remainder.size()))
    throw std::invalid_argument("make_splits: not enough nodes left for the validation set");
  rng.shuffle(remainder);
  for (int i = 0; i < val_total; ++i) splits.val[remainder[i]] = 1;
  const int test_begin = val_total;
  const int test_end = test_total > 0
                           ? std::min<int>(test_begin + test_total, static_cast<int>(remainder.size()))
                           : static_cast<int>(remainder.size());
  for (int i = test_begin; i < test_end; ++i) splits.test[remainder[i]] = 1;
  return splits;
}

void export_results(const std::vector<EpochRecord>& history, const std::vector<BoundReport>& reports,
                    const fs::path& dir) {
  if (history.empty()) throw std::invalid_argument("export_results: empty history");
  fs::create_directories(dir);
  std::string csv = "epoch,loss,val_acc,test_acc\n";
  for (const auto& rec : history) {
    csv += std::to_string(rec.epoch);
    csv += ',';
    format_double(csv, rec.train_loss, "%.6f");
    csv += ',';
    format_double(csv, rec.val_acc, "%.6f");
    csv += ',';
    format_double(csv, rec.test_acc, "%.6f");
    csv += '\n';
  }
  std::ofstream out(dir / "metrics.csv");
  if (!out) throw std::runtime_error("export_results: cannot write to " + dir.string());
  out << csv;

  if (!reports.empty()) {
    std::ofstream bounds(dir / "bounds.tsv");
    write_bound_reports(reports, bounds);
  }
}

void write_summary(const std::string& variant, const std::vector<std::pair<std::uint64_t, double>>& seed_accs,
                   const fs::path& path) {
  if (seed_accs.empty()) throw std::invalid_argument("write_summary: no results");
  std::string csv = "variant,seed,test_acc,test_acc_std\n";
  double mean = 0.0;
  for (const auto& [seed, acc] : seed_accs) {
    csv += variant + "," + std::to_string(seed) + ",";
    format_double(csv, acc, "%.6f");
    csv += ",\n";
    mean += acc;
  }
  mean /= seed_accs.size();
  double var = 0.0;
  for (const auto& [seed, acc] : seed_accs) var += (acc - mean) * (acc - mean);
  const double stddev = seed_accs.size() > 1 ? std::sqrt(var / (seed_accs.size() - 1)) : 0.0;
  csv += variant + ",mean,";
  format_double(csv, mean, "%.6f");
  csv += ',';
  format_double(csv, stddev, "%.6f");
  csv += '\n';
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_summary: cannot write to " + path.string());
  out << csv;
}

}  // namespace geomix
