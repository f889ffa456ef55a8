#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "geomix/cli.hpp"
#include "geomix/dataset.hpp"

using namespace geomix;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = GEOMIX_DATA_DIR;

int cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage = {"geomix"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("geomix_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string demo10() { return (kDataDir / "demo10").string(); }

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({"--frobnicate"}) == 2);                        // unknown flag
  CHECK(cli({"train", "--set", "no.such.key=1"}) == 2);     // unknown config key
  CHECK(cli({"train"}) == 2);                               // dataset.dir missing
  CHECK(cli({"knn", "--dataset", demo10()}) == 2);          // knn.k required
  CHECK(cli({"--help"}) == 0);
}

TEST_CASE("knn command writes edges for the bundled fixture") {
  const fs::path out = temp_dir("knn");
  CHECK(cli({"knn", "--dataset", demo10(), "--out", out.string(), "--set", "knn.k=2"}) == 0);
  CHECK(fs::exists(out / "edges.txt"));
  CHECK(fs::exists(out / "config.echo.txt"));
  const std::string edges = slurp(out / "edges.txt");
  CHECK(edges.find(" ") != std::string::npos);
}

TEST_CASE("augment command emits mixed features and labels") {
  const fs::path out = temp_dir("augment");
  CHECK(cli({"augment", "--dataset", (kDataDir / "path3").string(), "--out", out.string(), "--set",
             "variant=geomix2", "--set", "mix.alpha=0.5", "--set", "mix.hops=2"}) == 0);
  const std::string features = slurp(out / "mixed_features.csv");
  // path3 has no splits, so the zero-model pseudo source is uniform
  // everywhere and the worked feature values apply
  CHECK(features.find("1.625") != std::string::npos);
  CHECK(features.find("2.125") != std::string::npos);
  CHECK(features.find("3.125") != std::string::npos);
  const std::string labels = slurp(out / "mixed_labels.csv");
  CHECK(labels.find("0.5") != std::string::npos);
}

TEST_CASE("train command produces metrics, summary, and echo; reruns are identical") {
  const fs::path out1 = temp_dir("train1");
  const fs::path out2 = temp_dir("train2");
  const std::vector<std::string> common = {
      "--set", "train.epochs=25",  "--set", "train.patience=25", "--set", "train.hidden=8",
      "--set", "variant=geomix1",  "--set", "seeds=0,1,2,3,4"};
  for (const fs::path& out : {out1, out2}) {
    std::vector<std::string> args = {"train", "--dataset", demo10(), "--out", out.string()};
    args.insert(args.end(), common.begin(), common.end());
    std::vector<const char*> argv = {"geomix"};
    for (const auto& s : args) argv.push_back(s.c_str());
    CHECK(run_cli(static_cast<int>(argv.size()), argv.data()) == 0);
  }
  const std::string summary = slurp(out1 / "summary.csv");
  int lines = 0;
  for (char c : summary) lines += c == '\n';
  CHECK(lines == 7);  // header + 5 seeds + aggregate
  CHECK(summary == slurp(out2 / "summary.csv"));
  CHECK(slurp(out1 / "seed0" / "metrics.csv") == slurp(out2 / "seed0" / "metrics.csv"));
  CHECK(slurp(out1 / "config.echo.txt").find("train.epochs=25") != std::string::npos);
}

TEST_CASE("config file values are overridden by --set") {
  const fs::path dir = temp_dir("cfg");
  std::ofstream(dir / "run.cfg") << "# comment\nvariant=geomix2\nmix.alpha=0.3\n";
  const fs::path out = dir / "out";
  CHECK(cli({"augment", "--config", (dir / "run.cfg").string(), "--dataset",
             (kDataDir / "path3").string(), "--out", out.string(), "--set", "mix.alpha=0.5",
             "--set", "mix.hops=2"}) == 0);
  const std::string echo = slurp(out / "config.echo.txt");
  CHECK(echo.find("variant=geomix2") != std::string::npos);  // from file
  CHECK(echo.find("mix.alpha=0.5") != std::string::npos);    // flag wins
}

TEST_CASE("gradcheck command passes at its tolerance") {
  const fs::path out = temp_dir("gradcheck");
  CHECK(cli({"gradcheck", "--out", out.string(), "--set", "gradcheck.reps=2"}) == 0);
}

TEST_CASE("verify command passes on a reduced grid") {
  const fs::path out = temp_dir("verify");
  CHECK(cli({"verify", "--out", out.string(), "--set", "verify.trials=4000", "--set",
             "verify.graphs=3"}) == 0);
  CHECK(fs::exists(out / "bounds.tsv"));
  CHECK(fs::exists(out / "descent.txt"));
  const std::string bounds = slurp(out / "bounds.tsv");
  CHECK(bounds.find("label\tdegree") == 0);
}
