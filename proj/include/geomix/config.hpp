#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geomix/dataset.hpp"
#include "geomix/mix.hpp"
#include "geomix/trainer.hpp"

namespace geomix {

struct KeySpec {
  const char* name;
  const char* fallback;
  const char* help;
};

// Flat key=value run configuration. Unknown keys are rejected; values set
// explicitly (file first, then flags) override the registry defaults.
class RunConfig {
 public:
  static const std::vector<KeySpec>& registry();

  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& key_eq_value);  // "key=value"

  bool is_set(const std::string& key) const { return values_.count(key) > 0; }
  std::string str(const std::string& key) const;
  long integer(const std::string& key) const;
  double real(const std::string& key) const;

  std::vector<std::uint64_t> seeds() const;
  MixVariant variant() const;
  Scheme scheme() const;
  KnnMetric knn_metric() const;
  MixConfig mix_config() const;
  TrainConfig train_config(std::uint64_t seed) const;

  // Every registry key with its effective value, sorted, one per line.
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
};

// Worker-thread budget: GEOMIX_THREADS when set, otherwise the hardware
// concurrency clamped to [1, 8].
int worker_threads();

}  // namespace geomix
