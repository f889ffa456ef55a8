#include "geomix/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace geomix {

const std::vector<KeySpec>& RunConfig::registry() {
  static const std::vector<KeySpec> keys = {
      {"dataset.dir", "", "dataset directory (edges.txt, features.csv, labels.txt, meta.txt)"},
      {"dataset.split", "default", "split name under <dataset.dir>/splits/"},
      {"out.dir", "out", "output directory"},
      {"seeds", "0,1,2,3,4", "comma-separated list of run seeds"},
      {"variant", "geomix1", "mixup variant: basic | geomix1 | geomix2 | geomix3"},
      {"mix.alpha", "0.5", "locality-reinforcement weight in [0,1]"},
      {"mix.eta", "0.5", "geomix3 graph-branch weight in [0,1]"},
      {"mix.hops", "2", "number of consecutive mixup operations"},
      {"mix.scheme", "row", "mixing-weight normalization: row | sym"},
      {"train.lr", "0.01", "learning rate"},
      {"train.weight_decay", "0.0005", "decoupled weight decay on weight matrices"},
      {"train.dropout", "0.5", "dropout rate on the hidden layer"},
      {"train.epochs", "500", "maximum training epochs"},
      {"train.patience", "100", "early-stop patience on validation accuracy"},
      {"train.lambda", "1.0", "weight of the mixed-label loss term"},
      {"train.hidden", "64", "hidden dimension"},
      {"train.projection_dim", "16", "geomix3 projection dimension"},
      {"split.per_class_train", "0", "when > 0, generate splits: train nodes per class"},
      {"split.val_total", "0", "generated splits: total validation nodes"},
      {"split.test_total", "0", "generated splits: test nodes (0 = all remaining)"},
      {"split.seed", "0", "seed for generated splits"},
      {"knn.k", "0", "neighbors per node for the knn command (required, no default)"},
      {"knn.metric", "euclidean", "knn distance: euclidean | cosine"},
      {"augment.pseudo", "", "optional CSV of pseudo labels (N x C); empty = zero-model source"},
      {"augment.seed", "0", "seed for the augment command (geomix3 projection init)"},
      {"verify.trials", "100000", "Monte Carlo trials per grid cell"},
      {"verify.graphs", "50", "random graphs for the descent-equivalence sweep"},
      {"verify.seed", "0", "master seed for verification"},
      {"gradcheck.reps", "20", "random instances per gradient check"},
      {"gradcheck.seed", "0", "master seed for gradient checks"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(const std::string& key) {
  for (const auto& spec : RunConfig::registry())
    if (key == spec.name) return &spec;
  return nullptr;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  RunConfig config;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    config.set_assignment(line.substr(first));
  }
  return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (find_key(key) == nullptr) throw std::invalid_argument("config: unknown key '" + key + "'");
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config: expected key=value, got '" + key_eq_value + "'");
  set(key_eq_value.substr(0, eq), key_eq_value.substr(eq + 1));
}

std::string RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw std::invalid_argument("config: unknown key '" + key + "'");
  return spec->fallback;
}

long RunConfig::integer(const std::string& key) const {
  const std::string v = str(key);
  try {
    size_t pos = 0;
    const long out = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
}

double RunConfig::real(const std::string& key) const {
  const std::string v = str(key);
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' needs a number, got '" + v + "'");
  }
}

std::vector<std::uint64_t> RunConfig::seeds() const {
  const std::string v = str("seeds");
  std::vector<std::uint64_t> out;
  size_t begin = 0;
  while (begin <= v.size()) {
    const size_t end = std::min(v.find(',', begin), v.size());
    const std::string token = v.substr(begin, end - begin);
    if (!token.empty()) {
      try {
        out.push_back(std::stoull(token));
      } catch (const std::exception&) {
        throw std::invalid_argument("config: bad seed '" + token + "'");
      }
    }
    begin = end + 1;
  }
  if (out.empty()) throw std::invalid_argument("config: seeds list is empty");
  return out;
}

MixVariant RunConfig::variant() const {
  const std::string v = str("variant");
  if (v == "basic") return MixVariant::kBasic;
  if (v == "geomix1") return MixVariant::kGeoMixI;
  if (v == "geomix2") return MixVariant::kGeoMixII;
  if (v == "geomix3") return MixVariant::kGeoMixIII;
  throw std::invalid_argument("config: unknown variant '" + v + "'");
}

Scheme RunConfig::scheme() const {
  const std::string v = str("mix.scheme");
  if (v == "row") return Scheme::kRowNormalized;
  if (v == "sym") return Scheme::kSymmetric;
  throw std::invalid_argument("config: unknown scheme '" + v + "' (row | sym)");
}

KnnMetric RunConfig::knn_metric() const {
  const std::string v = str("knn.metric");
  if (v == "euclidean") return KnnMetric::kEuclidean;
  if (v == "cosine") return KnnMetric::kCosine;
  throw std::invalid_argument("config: unknown knn metric '" + v + "'");
}

MixConfig RunConfig::mix_config() const {
  MixConfig mix;
  mix.variant = variant();
  mix.alpha = real("mix.alpha");
  mix.eta = real("mix.eta");
  mix.hops = static_cast<int>(integer("mix.hops"));
  mix.scheme = scheme();
  mix.validate();
  return mix;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
  TrainConfig config;
  config.learning_rate = real("train.lr");
  config.weight_decay = real("train.weight_decay");
  config.dropout_rate = real("train.dropout");
  config.epochs = static_cast<int>(integer("train.epochs"));
  config.patience = static_cast<int>(integer("train.patience"));
  config.lambda = real("train.lambda");
  config.hidden_dim = static_cast<int>(integer("train.hidden"));
  config.projection_dim = static_cast<int>(integer("train.projection_dim"));
  config.mix = mix_config();
  config.seed = seed;
  config.validate();
  return config;
}

std::string RunConfig::echo() const {
  std::vector<std::string> lines;
  for (const auto& spec : registry()) lines.push_back(std::string(spec.name) + "=" + str(spec.name));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& line : lines) {
    out += line;
    out += '\n';
  }
  return out;
}

int worker_threads() {
  if (const char* env = std::getenv("GEOMIX_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min<int>(static_cast<int>(hw), 8));
}

}  // namespace geomix
