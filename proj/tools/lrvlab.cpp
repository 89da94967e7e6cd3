// lrvlab command-line front end.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/graphs.hpp"
#include "lrvlab/harness.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lrvlab::InvalidInput("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw lrvlab::InvalidInput("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lrvlab::Error("cannot write '" + path.string() + "'");
  out << text;
}

std::uint64_t parse_seed(const std::string& text, const char* what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw lrvlab::InvalidInput(std::string(what) + " is not an unsigned integer: '" + text + "'");
  }
  return v;
}

int run_command(const std::string& config_path, const std::string& out_dir,
                const std::optional<std::string>& seed_flag, unsigned threads, const std::string& format) {
  auto configs = lrvlab::parse_config_document(read_json(config_path));
  // --seed wins over LRVLAB_SEED, which wins over the config.
  std::optional<std::uint64_t> seed;
  if (const char* env = std::getenv("LRVLAB_SEED"); env != nullptr && *env != '\0') {
    seed = parse_seed(env, "LRVLAB_SEED");
  }
  if (seed_flag) seed = parse_seed(*seed_flag, "--seed");
  if (seed) {
    for (auto& c : configs) lrvlab::override_seed(c, *seed);
  }
  const lrvlab::ExperimentReport report = lrvlab::run_experiments(configs, {threads});
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  if (format.empty() || format == "csv") write_file(dir / "report.csv", lrvlab::to_csv(report));
  if (format.empty() || format == "json") write_file(dir / "report.json", lrvlab::to_json_text(report));
  std::size_t failed = 0;
  for (const auto& c : report.cells) {
    if (c.error) {
      ++failed;
      std::cerr << "cell " << c.design_id << "/n=" << c.n << " failed: " << *c.error << '\n';
    }
  }
  std::cout << report.cells.size() << " cells, " << failed << " failed, config " << report.provenance.config_hash
            << '\n';
  return failed == 0 ? 0 : 3;
}

int spectral_command(const std::vector<std::size_t>& sizes, const std::vector<double>& deltas) {
  const lrvlab::ClusterStructure cs(sizes);
  const lrvlab::BlockEquicorrModel model(cs, deltas);
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : lrvlab::model_spectrum(model)) {
    blocks.push_back({{"size", b.size},
                      {"delta", b.delta},
                      {"eigenvalues", b.eigenvalues()},
                      {"multiplicities", b.multiplicities()},
                      {"log_det", b.log_det()}});
  }
  const nlohmann::json out = {{"blocks", blocks},
                              {"log_det", lrvlab::log_det(model)},
                              {"long_run_variance", lrvlab::long_run_variance(model)},
                              {"n", cs.n()},
                              {"n_star", cs.n_star()},
                              {"h", cs.heterogeneity()}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int stats_command(const std::string& graph_path) {
  const auto g = read_json(graph_path).get<lrvlab::DependencyGraph>();
  std::cout << lrvlab::stats_to_json(lrvlab::graph_stats(g)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for Gaussian cluster dependence"};
  app.set_version_flag("--version", std::string(lrvlab::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::string> seed;
  unsigned threads = 0;
  std::string format;
  auto* run = app.add_subcommand("run", "Run the experiments of a config file");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Master seed; overrides LRVLAB_SEED and the config");
  run->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  run->add_option("--format", format, "Write only one format")->check(CLI::IsMember({"csv", "json"}));

  std::vector<std::size_t> sizes;
  std::vector<double> deltas;
  auto* spectral = app.add_subcommand("spectral", "Closed-form spectrum of a block model");
  spectral->add_option("--sizes", sizes, "Cluster sizes, comma separated")->required()->delimiter(',');
  spectral->add_option("--deltas", deltas, "Per-cluster deltas, comma separated")->required()->delimiter(',');

  std::string graph_path;
  auto* stats = app.add_subcommand("stats", "Degree and clique statistics of a graph");
  stats->add_option("--graph", graph_path, "Graph JSON {\"n\", \"edges\"}")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, out_dir, seed, threads, format);
    if (*spectral) return spectral_command(sizes, deltas);
    if (*stats) return stats_command(graph_path);
  } catch (const lrvlab::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
