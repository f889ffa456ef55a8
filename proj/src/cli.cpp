#include "geomix/cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "geomix/config.hpp"
#include "geomix/dataset.hpp"
#include "geomix/gradcheck.hpp"
#include "geomix/synthetic.hpp"

namespace geomix {

namespace {

namespace fs = std::filesystem;

void write_echo(const RunConfig& config) {
  const fs::path dir = config.str("out.dir");
  fs::create_directories(dir);
  std::ofstream out(dir / "config.echo.txt");
  if (!out) throw std::runtime_error("cannot write config echo under " + dir.string());
  out << config.echo();
}

Graph load_graph_with_splits(const RunConfig& config) {
  if (config.str("dataset.dir").empty()) throw std::invalid_argument("dataset.dir is required");
  DatasetBundle bundle = load_dataset(config.str("dataset.dir"), config.str("dataset.split"));
  Graph graph = std::move(bundle.graph);
  if (config.integer("split.per_class_train") > 0) {
    Splits splits = make_splits(graph, static_cast<int>(config.integer("split.per_class_train")),
                                static_cast<int>(config.integer("split.val_total")),
                                static_cast<std::uint64_t>(config.integer("split.seed")),
                                static_cast<int>(config.integer("split.test_total")));
    graph.train_mask = std::move(splits.train);
    graph.val_mask = std::move(splits.val);
    graph.test_mask = std::move(splits.test);
    graph.validate();
  }
  return graph;
}

std::string variant_name(const RunConfig& config) { return config.str("variant"); }

int cmd_train(const RunConfig& config) {
  write_echo(config);
  Graph graph = load_graph_with_splits(config);
  const fs::path out_dir = config.str("out.dir");
  const std::vector<std::uint64_t> seeds = config.seeds();

  std::vector<TrainResult> results(seeds.size());
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto job = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        results[i] = train(graph, config.train_config(seeds[i]));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(seeds.size()));
  if (threads <= 1) {
    job();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(job);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<std::pair<std::uint64_t, double>> seed_accs;
  for (size_t i = 0; i < seeds.size(); ++i) {
    const TrainResult& r = results[i];
    export_results(r.history, {}, out_dir / ("seed" + std::to_string(seeds[i])));
    seed_accs.emplace_back(seeds[i], r.test_acc);
    std::printf("seed %llu: best val %.4f (epoch %d), test %.4f\n",
                static_cast<unsigned long long>(seeds[i]), r.best_val_acc, r.best_epoch, r.test_acc);
  }
  write_summary(variant_name(config), seed_accs, out_dir / "summary.csv");

  double mean = 0.0;
  for (const auto& [s, acc] : seed_accs) mean += acc;
  mean /= seed_accs.size();
  std::printf("%s: mean test accuracy %.4f over %zu seeds\n", variant_name(config).c_str(), mean,
              seed_accs.size());
  return 0;
}

Matrix load_pseudo_csv(const fs::path& path, int num_nodes, int num_classes) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("augment: cannot open pseudo-label file " + path.string());
  Matrix pseudo(num_nodes, num_classes);
  std::string line;
  int r = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (r >= num_nodes) throw std::invalid_argument("augment: pseudo-label file has extra rows");
    std::istringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= num_classes) throw std::invalid_argument("augment: pseudo-label row has extra columns");
      pseudo(r, c++) = std::stod(cell);
    }
    if (c != num_classes) throw std::invalid_argument("augment: pseudo-label row is short");
    ++r;
  }
  if (r != num_nodes) throw std::invalid_argument("augment: pseudo-label file is short");
  return pseudo;
}

void write_matrix_csv(const Matrix& m, const fs::path& path) {
  std::string out;
  char buf[64];
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out += buf;
    }
    out += '\n';
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << out;
}

int cmd_augment(const RunConfig& config) {
  write_echo(config);
  Graph graph = load_graph_with_splits(config);
  const fs::path out_dir = config.str("out.dir");

  Matrix pseudo;
  if (!config.str("augment.pseudo").empty()) {
    pseudo = load_pseudo_csv(config.str("augment.pseudo"), graph.num_nodes, graph.num_classes);
  } else {
    // zero-model source: uniform softmax on unlabeled rows, one-hot ground
    // truth on train rows
    pseudo = Matrix(graph.num_nodes, graph.num_classes);
    for (int v = 0; v < graph.num_nodes; ++v) {
      if (graph.train_mask[v]) {
        pseudo(v, graph.labels[v]) = 1.0;
      } else {
        for (int c = 0; c < graph.num_classes; ++c) pseudo(v, c) = 1.0 / graph.num_classes;
      }
    }
  }

  const MixConfig mix = config.mix_config();
  AttentionParams attention;
  const AttentionParams* attention_ptr = nullptr;
  if (mix.variant == MixVariant::kGeoMixIII) {
    Rng rng = Rng::substream(static_cast<std::uint64_t>(config.integer("augment.seed")), streams::kInit);
    attention = AttentionParams::init(mix.hops, graph.feature_dim(),
                                      static_cast<int>(config.integer("train.projection_dim")), rng);
    attention_ptr = &attention;
  }
  MixState state = run_mixup(graph, pseudo, mix, attention_ptr);
  write_matrix_csv(state.features, out_dir / "mixed_features.csv");
  write_matrix_csv(state.soft_labels, out_dir / "mixed_labels.csv");
  std::printf("augment: wrote mixed features/labels for %d nodes after %d hops\n", graph.num_nodes,
              state.hop);
  return 0;
}

int cmd_verify(const RunConfig& config) {
  write_echo(config);
  const fs::path out_dir = config.str("out.dir");
  const long trials = config.integer("verify.trials");
  const std::uint64_t seed = config.integer("verify.seed");
  const int threads = worker_threads();

  const std::vector<double> homophilies = {0.5, 0.7, 0.9, 1.0};
  const std::vector<int> class_counts = {2, 5};
  const std::vector<int> degrees = {5, 20};
  const std::vector<int> feature_dims = {1, 8};
  const std::vector<double> multipliers = {0.1, 0.25, 0.5, 1.0};

  std::vector<BoundReport> reports;
  bool ok = true;
  long cells = 0;
  std::uint64_t cell_seed = seed;
  for (double p : homophilies)
    for (int c : class_counts)
      for (int d : degrees)
        for (int f : feature_dims) {
          ++cells;
          SyntheticSpec spec = SyntheticSpec::make(c, p, 0.1, f, d, ++cell_seed);
          char label[128];

          std::vector<double> feature_ts;
          for (double m : multipliers) feature_ts.push_back(m * spec.feature_bound * std::sqrt(f));
          MonteCarloReport th1 = verify_feature_expectation(spec, trials, feature_ts, 0, threads);
          std::snprintf(label, sizeof(label), "feature p=%.1f C=%d d=%d F=%d", p, c, d, f);
          for (auto& br : th1.tails) {
            br.label = label;
            reports.push_back(br);
          }
          if (!th1.expectation_ok || !th1.tails_ok) {
            ok = false;
            std::printf("FAIL %s (max |z| = %.2f)\n", label, th1.max_abs_z);
          }

          std::vector<double> label_ts;
          for (double m : multipliers) label_ts.push_back(m * std::sqrt(c));
          MonteCarloReport th2 = verify_label_expectation(spec, trials, label_ts, 0, threads);
          std::snprintf(label, sizeof(label), "label p=%.1f C=%d d=%d F=%d", p, c, d, f);
          for (auto& br : th2.tails) {
            br.label = label;
            reports.push_back(br);
          }
          if (!th2.expectation_ok || !th2.tails_ok) {
            ok = false;
            std::printf("FAIL %s (max |z| = %.2f)\n", label, th2.max_abs_z);
          }
        }
  {
    std::ofstream out(out_dir / "bounds.tsv");
    write_bound_reports(reports, out);
  }
  std::printf("expectation/tail checks: %ld grid cells, %zu bound rows, %s\n", cells, reports.size(),
              ok ? "all respected" : "violations found");

  const int graphs = static_cast<int>(config.integer("verify.graphs"));
  double worst = 0.0;
  Rng graph_rng = Rng::substream(seed, streams::kSynthetic, 999);
  for (int g = 0; g < graphs; ++g) {
    const int n = 3 + graph_rng.uniform_int(98);
    Graph graph = make_random_graph(n, 0.15, 1 + graph_rng.uniform_int(6), graph_rng);
    for (double alpha : {0.2, 0.5, 0.8}) {
      worst = std::max(worst, verify_descent_equivalence(graph, alpha, MixVariant::kGeoMixI));
      worst = std::max(worst, verify_descent_equivalence(graph, alpha, MixVariant::kGeoMixII));
    }
  }
  const bool descent_ok = worst <= 1e-9;
  ok = ok && descent_ok;
  std::printf("descent equivalence: %d graphs, max deviation %.3e, %s\n", graphs, worst,
              descent_ok ? "ok" : "VIOLATED");
  {
    std::ofstream out(out_dir / "descent.txt");
    out << "graphs=" << graphs << "\nmax_deviation=" << worst << "\nok=" << (descent_ok ? "yes" : "no")
        << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_gradcheck(const RunConfig& config) {
  write_echo(config);
  const int reps = static_cast<int>(config.integer("gradcheck.reps"));
  const std::uint64_t seed = config.integer("gradcheck.seed");
  double worst = 0.0;
  std::map<std::string, double> per_tensor;
  for (int r = 0; r < reps; ++r) {
    for (const GradCheckReport& report :
         {gradcheck_gcn(seed + r), gradcheck_geomix3(seed + 1000 + r)}) {
      for (const auto& [name, err] : report.errors) {
        per_tensor[name] = std::max(per_tensor[name], err);
        worst = std::max(worst, err);
      }
    }
  }
  for (const auto& [name, err] : per_tensor)
    std::printf("%-12s max relative error %.3e\n", name.c_str(), err);
  const bool ok = worst <= 1e-4;
  std::printf("gradcheck: %d repetitions, worst %.3e, %s\n", reps, worst, ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

int cmd_knn(const RunConfig& config) {
  if (config.str("dataset.dir").empty()) throw std::invalid_argument("dataset.dir is required");
  if (!config.is_set("knn.k") || config.integer("knn.k") < 1)
    throw std::invalid_argument("knn.k is required (no default)");
  write_echo(config);
  const fs::path dir = config.str("dataset.dir");

  // features.csv alone is enough here; meta.txt is only consulted if present
  std::ifstream in(dir / "features.csv");
  if (!in) throw std::invalid_argument("knn: missing " + (dir / "features.csv").string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && rows.front().size() != row.size())
      throw std::invalid_argument("knn: ragged features.csv");
    rows.push_back(std::move(row));
  }
  Matrix features(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows.front().size()));
  for (int r = 0; r < features.rows(); ++r)
    for (int c = 0; c < features.cols(); ++c) features(r, c) = rows[r][c];

  const auto edges = knn_graph(features, static_cast<int>(config.integer("knn.k")), config.knn_metric());
  const fs::path out_dir = config.str("out.dir");
  std::string text;
  for (const auto& [u, v] : edges)
    if (u < v) text += std::to_string(u) + " " + std::to_string(v) + "\n";
  std::ofstream out(out_dir / "edges.txt");
  if (!out) throw std::runtime_error("cannot write " + (out_dir / "edges.txt").string());
  out << text;
  std::printf("knn: wrote %zu undirected edges for %d points\n", edges.size() / 2, features.rows());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"geomix: geometry-aware mixup for semi-supervised node classification"};
  app.require_subcommand(1);

  std::string footer = "Configuration keys (file via --config, overrides via --set key=value):\n";
  for (const auto& spec : RunConfig::registry()) {
    footer += "  ";
    footer += spec.name;
    if (spec.fallback[0] != '\0') {
      footer += " (default ";
      footer += spec.fallback;
      footer += ")";
    }
    footer += ": ";
    footer += spec.help;
    footer += '\n';
  }
  footer += "Environment: GEOMIX_THREADS caps worker threads.";
  app.footer(footer);

  struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string dataset, out;
  };
  const std::map<std::string, std::string> descriptions = {
      {"train", "train one model per seed and write metrics/summary files"},
      {"augment", "run the configured mixup once and write mixed features/labels"},
      {"verify", "Monte Carlo expectation/tail checks and the descent-equivalence sweep"},
      {"gradcheck", "finite-difference checks of the hand-written gradients"},
      {"knn", "build a symmetrized k-nearest-neighbor edge list from features.csv"},
  };
  std::map<std::string, CommonArgs> args;
  for (const char* name : {"train", "augment", "verify", "gradcheck", "knn"}) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    CommonArgs& a = args[name];
    sub->add_option("--config", a.config_file, "key=value configuration file");
    sub->add_option("--set", a.overrides, "override a configuration key (key=value, repeatable)");
    sub->add_option("--dataset", a.dataset, "shorthand for --set dataset.dir=...");
    sub->add_option("--out", a.out, "shorthand for --set out.dir=...");
  }
  app.add_subcommand("help")->silent();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  if (app.get_subcommand_ptr("help")->parsed()) {
    std::cout << app.help();
    return 0;
  }

  try {
    for (const auto& [name, a] : args) {
      if (!app.get_subcommand_ptr(name)->parsed()) continue;
      RunConfig config;
      if (!a.config_file.empty()) config = RunConfig::from_file(a.config_file);
      for (const auto& kv : a.overrides) config.set_assignment(kv);
      if (!a.dataset.empty()) config.set("dataset.dir", a.dataset);
      if (!a.out.empty()) config.set("out.dir", a.out);

      if (name == "train") return cmd_train(config);
      if (name == "augment") return cmd_augment(config);
      if (name == "verify") return cmd_verify(config);
      if (name == "gradcheck") return cmd_gradcheck(config);
      if (name == "knn") return cmd_knn(config);
    }
    std::cerr << "no command selected\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace geomix
