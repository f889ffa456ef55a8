#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "geomix/graph.hpp"
#include "geomix/synthetic.hpp"
#include "geomix/trainer.hpp"

namespace geomix {

struct DatasetMetadata {
  std::string name;
  std::filesystem::path source_dir;
  std::string split_name;  // empty when no split was loaded
  // construction parameters carried in meta.txt beyond the required keys
  // (e.g. knn_k / knn_metric for feature-built graphs)
  std::map<std::string, std::string> construction;
  std::uint64_t checksum = 0;  // FNV-1a over the input files
};

struct DatasetBundle {
  Graph graph;
  DatasetMetadata metadata;
};

// Directory layout (whitespace/comma-delimited UTF-8 text):
//   edges.txt      one "u v" pair per line, 0-indexed, undirected
//   features.csv   N rows x F comma-separated reals
//   labels.txt     N integers in [0, C)
//   meta.txt       key=value lines: num_nodes, num_classes, feature_dim
//   splits/<name>/{train,val,test}.txt   optional node-index lists
// Undirected edges are expanded to both directions; duplicates collapse to
// one stored edge per direction.
DatasetBundle load_dataset(const std::filesystem::path& dir, const std::string& split = "default");

// Writes the canonical layout back out; doubles are printed with enough
// digits to round-trip exactly.
void save_dataset(const Graph& graph, const std::filesystem::path& dir);

enum class KnnMetric { kEuclidean, kCosine };

// Edges to each node's k nearest neighbors (self excluded), symmetrized as
// the union of both directions. Distance ties break toward the lower node
// index. Requires k < N.
std::vector<std::pair<int, int>> knn_graph(const Matrix& features, int k, KnnMetric metric);

struct Splits {
  Mask train, val, test;
};

// Seeded sampling without replacement: per_class_train nodes per class,
// then val_total validation nodes from the remainder; the rest become the
// test pool unless test_total > 0 caps it.
Splits make_splits(const Graph& graph, int per_class_train, int val_total, std::uint64_t seed,
                   int test_total = 0);

// Writes metrics.csv (epoch,loss,val_acc,test_acc) and, when reports are
// present, bounds.tsv. Output is byte-deterministic for identical inputs.
void export_results(const std::vector<EpochRecord>& history, const std::vector<BoundReport>& reports,
                    const std::filesystem::path& dir);

// summary.csv rows (variant,seed,test_acc) followed by an aggregate row
// carrying the mean and the n-1 sample standard deviation.
void write_summary(const std::string& variant, const std::vector<std::pair<std::uint64_t, double>>& seed_accs,
                   const std::filesystem::path& path);

std::uint64_t fnv1a_file(const std::filesystem::path& path, std::uint64_t hash = 1469598103934665603ULL);

}  // namespace geomix
