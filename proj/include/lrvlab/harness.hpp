#ifndef LRVLAB_HARNESS_HPP
#define LRVLAB_HARNESS_HPP

// Config-driven Monte Carlo experiments.
//
// A config names an experiment kind, a list of designs, an n grid, the
// number of replications and a master seed. Every (design, n) pair is a
// cell. Cell c, replication r draws from derive_stream(cell_seed(c), r),
// and per-replication outputs are reduced in replication order, so reports
// are byte-identical for any thread count. The config schema is documented
// in README.md.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/estimators.hpp"
#include "lrvlab/graphs.hpp"
#include "lrvlab/inference_tests.hpp"
#include "lrvlab/likelihood.hpp"
#include "lrvlab/parallel.hpp"
#include "lrvlab/rng.hpp"
#include "lrvlab/sampler.hpp"

namespace lrvlab {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::size_t kMinReplications = 100;

enum class ExperimentKind { estimator_consistency, contiguity, test_size_power, graph_estimation };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::estimator_consistency: return "estimator_consistency";
    case ExperimentKind::contiguity: return "contiguity";
    case ExperimentKind::test_size_power: return "test_size_power";
    case ExperimentKind::graph_estimation: return "graph_estimation";
  }
  return "unknown";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "estimator_consistency") return ExperimentKind::estimator_consistency;
  if (s == "contiguity") return ExperimentKind::contiguity;
  if (s == "test_size_power") return ExperimentKind::test_size_power;
  if (s == "graph_estimation") return ExperimentKind::graph_estimation;
  throw InvalidInput("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Design specification.

struct ClusterPattern {
  /// single | pairs | halves | equal | fixed | singletons | explicit | clique_half
  std::string kind = "single";
  std::size_t count = 0;  // equal
  std::size_t size = 0;   // fixed
  std::vector<std::size_t> sizes;  // explicit
};

struct DeltaScheme {
  /// constant | scaled_nstar | scaled_n | common_variance | explicit
  std::string kind = "constant";
  double value = 0.0;
  std::vector<double> values;  // explicit
};

struct GraphSpec {
  /// random | cycle | star | complete | empty | cluster
  std::string kind = "cluster";
  std::size_t d_max = 3;
};

struct DataModel {
  /// block | edge_shock | star
  std::string kind = "block";
  double c = 0.5;        // edge_shock
  double loading = 0.5;  // star
};

struct DesignSpec {
  std::string id;
  ClusterPattern clusters;
  DeltaScheme delta;
  std::vector<double> mu_grid{0.0};
  /// lrv_root_n: mu = value * sigma_LR / sqrt(n); absolute: mu = value.
  std::string mu_units = "lrv_root_n";
  std::optional<double> z_bound;
  std::optional<double> limit_delta;
  GraphSpec graph;
  DataModel data;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::estimator_consistency;
  std::vector<DesignSpec> designs;
  std::vector<std::size_t> n_grid;
  std::size_t replications = 0;
  double alpha = 0.05;
  double epsilon = 0.1;
  std::uint64_t master_seed = 0;
  /// The JSON document this config was read from, with overrides applied.
  nlohmann::json source;
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline ClusterPattern parse_pattern(const nlohmann::json& j) {
  ClusterPattern p;
  if (j.is_string()) {
    p.kind = j.get<std::string>();
    return p;
  }
  p.kind = j.at("pattern").get<std::string>();
  p.count = get_or<std::size_t>(j, "count", 0);
  p.size = get_or<std::size_t>(j, "size", 0);
  p.sizes = get_or<std::vector<std::size_t>>(j, "sizes", {});
  return p;
}

inline DeltaScheme parse_delta(const nlohmann::json& j) {
  DeltaScheme d;
  if (j.is_number()) {
    d.value = j.get<double>();
    return d;
  }
  d.kind = j.at("scheme").get<std::string>();
  if (d.kind == "constant") d.value = j.at("value").get<double>();
  else if (d.kind == "scaled_nstar") d.value = j.at("delta_bar").get<double>();
  else if (d.kind == "scaled_n") d.value = j.at("delta").get<double>();
  else if (d.kind == "common_variance") d.value = j.at("sigma_sq").get<double>();
  else if (d.kind == "explicit") d.values = j.at("values").get<std::vector<double>>();
  else throw InvalidInput("unknown delta scheme '" + d.kind + "'");
  return d;
}

inline DesignSpec parse_design(const nlohmann::json& j) {
  DesignSpec d;
  d.id = j.at("id").get<std::string>();
  if (j.contains("clusters")) d.clusters = parse_pattern(j.at("clusters"));
  if (j.contains("delta")) d.delta = parse_delta(j.at("delta"));
  if (j.contains("mu_grid")) d.mu_grid = j.at("mu_grid").get<std::vector<double>>();
  if (d.mu_grid.empty()) throw InvalidInput("design '" + d.id + "': mu_grid is empty");
  d.mu_units = get_or<std::string>(j, "mu_units", d.mu_units);
  if (d.mu_units != "lrv_root_n" && d.mu_units != "absolute") {
    throw InvalidInput("design '" + d.id + "': mu_units must be lrv_root_n or absolute");
  }
  if (j.contains("z_bound")) d.z_bound = j.at("z_bound").get<double>();
  if (j.contains("limit_delta")) d.limit_delta = j.at("limit_delta").get<double>();
  if (j.contains("graph")) {
    const auto& g = j.at("graph");
    if (g.is_string()) {
      d.graph.kind = g.get<std::string>();
    } else {
      d.graph.kind = g.at("kind").get<std::string>();
      d.graph.d_max = get_or<std::size_t>(g, "d_max", d.graph.d_max);
    }
  }
  if (j.contains("data")) {
    const auto& m = j.at("data");
    d.data.kind = m.at("model").get<std::string>();
    d.data.c = get_or<double>(m, "c", d.data.c);
    d.data.loading = get_or<double>(m, "loading", d.data.loading);
  }
  return d;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.kind = experiment_kind_from_string(j.at("experiment").get<std::string>());
    for (const auto& d : j.at("designs")) c.designs.push_back(detail::parse_design(d));
    c.n_grid = j.at("n_grid").get<std::vector<std::size_t>>();
    c.replications = j.at("replications").get<std::size_t>();
    c.alpha = detail::get_or<double>(j, "alpha", c.alpha);
    c.epsilon = detail::get_or<double>(j, "epsilon", c.epsilon);
    c.master_seed = detail::get_or<std::uint64_t>(j, "master_seed", 0);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  if (c.designs.empty()) throw InvalidInput("config: designs is empty");
  if (c.n_grid.empty()) throw InvalidInput("config: n_grid is empty");
  for (std::size_t n : c.n_grid) {
    if (n == 0) throw InvalidInput("config: n_grid entries must be >= 1");
  }
  if (c.replications < kMinReplications) throw InvalidInput("config: replications must be >= 100");
  for (std::size_t a = 0; a < c.designs.size(); ++a) {
    for (std::size_t b = a + 1; b < c.designs.size(); ++b) {
      if (c.designs[a].id == c.designs[b].id) {
        throw InvalidInput("config: duplicate design id '" + c.designs[a].id + "'");
      }
    }
  }
  c.source = j;
  return c;
}

/// A config document is either one experiment or {"experiments": [...]}.
inline std::vector<ExperimentConfig> parse_config_document(const nlohmann::json& j) {
  std::vector<ExperimentConfig> out;
  if (j.is_object() && j.contains("experiments")) {
    for (const auto& e : j.at("experiments")) out.push_back(parse_config(e));
    if (out.empty()) throw InvalidInput("config: experiments is empty");
  } else {
    out.push_back(parse_config(j));
  }
  return out;
}

inline void override_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.master_seed = seed;
  c.source["master_seed"] = seed;
}

// ---------------------------------------------------------------------------
// Design resolution.

inline ClusterStructure make_structure(const ClusterPattern& p, std::size_t n) {
  std::vector<std::size_t> sizes;
  if (p.kind == "single") {
    sizes = {n};
  } else if (p.kind == "pairs") {
    sizes.assign(n / 2, 2);
    if (n % 2 == 1) sizes.push_back(1);
  } else if (p.kind == "halves") {
    if (n < 2) throw InvalidInput("halves pattern needs n >= 2");
    sizes = {n - n / 2, n / 2};
  } else if (p.kind == "equal") {
    if (p.count == 0 || p.count > n) throw InvalidInput("equal pattern needs 1 <= count <= n");
    sizes.assign(p.count, n / p.count);
    for (std::size_t m = 0; m < n % p.count; ++m) ++sizes[m];
  } else if (p.kind == "fixed") {
    if (p.size == 0) throw InvalidInput("fixed pattern needs size >= 1");
    sizes.assign(n / p.size, p.size);
    if (n % p.size != 0) sizes.push_back(n % p.size);
  } else if (p.kind == "singletons") {
    sizes.assign(n, 1);
  } else if (p.kind == "clique_half") {
    sizes.assign(1, n - n / 2);
    sizes.resize(1 + n / 2, 1);
  } else if (p.kind == "explicit") {
    sizes = p.sizes;
    std::size_t total = 0;
    for (std::size_t s : sizes) total += s;
    if (total != n) throw InvalidInput("explicit cluster sizes do not sum to n");
  } else {
    throw InvalidInput("unknown cluster pattern '" + p.kind + "'");
  }
  return ClusterStructure(std::move(sizes));
}

inline std::vector<double> make_deltas(const DeltaScheme& d, const ClusterStructure& cs) {
  const std::size_t count = cs.clusters();
  if (d.kind == "constant") return std::vector<double>(count, d.value);
  if (d.kind == "scaled_nstar") {
    if (cs.n_star() == 0) return std::vector<double>(count, 0.0);
    return std::vector<double>(count, d.value / static_cast<double>(cs.n_star()));
  }
  if (d.kind == "scaled_n") return std::vector<double>(count, d.value / static_cast<double>(cs.n()));
  if (d.kind == "common_variance") return deltas_for_common_variance(cs, d.value);
  if (d.kind == "explicit") {
    if (d.values.size() != count) throw InvalidInput("explicit deltas do not match the cluster count");
    return d.values;
  }
  throw InvalidInput("unknown delta scheme '" + d.kind + "'");
}

// ---------------------------------------------------------------------------
// Reports.

struct Metric {
  std::string name;
  double value = 0.0;
  /// Monte Carlo standard error; 0 for deterministic quantities.
  double se = 0.0;
};

struct ReportCell {
  std::string experiment;
  std::string design_id;
  std::size_t n = 0;
  std::size_t n_star = 0;
  std::size_t clusters = 0;
  double h = 0.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<Metric> metrics;
  std::optional<std::string> error;

  const Metric* find(std::string_view name) const {
    for (const auto& m : metrics) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }
  const Metric& at(std::string_view name) const {
    if (const Metric* m = find(name)) return *m;
    throw InvalidInput("cell " + design_id + "/" + std::to_string(n) + " has no metric '" +
                       std::string(name) + "'" + (error ? " (cell error: " + *error + ")" : ""));
  }
};

struct Provenance {
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string version{kVersion};
};

struct ExperimentReport {
  Provenance provenance;
  std::vector<ReportCell> cells;

  const ReportCell& cell(std::string_view design_id, std::size_t n) const {
    for (const auto& c : cells) {
      if (c.design_id == design_id && c.n == n) return c;
    }
    throw InvalidInput("report has no cell " + std::string(design_id) + "/" + std::to_string(n));
  }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, end);
  return std::string(16 - s.size(), '0') + s;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Seed of a cell; depends on the labels, not on the cell's position.
inline std::uint64_t cell_seed(std::uint64_t master, ExperimentKind kind, const std::string& design_id,
                               std::size_t n) {
  const std::string label = std::string(to_string(kind)) + "/" + design_id + "/" + std::to_string(n);
  return derive_seed(master, fnv1a64(label));
}

// ---------------------------------------------------------------------------
// Running.

namespace detail {

// Mean and standard error of column k of a row-major reps x width table.
inline std::pair<double, double> column_mean_se(const std::vector<double>& table, std::size_t width,
                                                std::size_t k) {
  const std::size_t reps = table.size() / width;
  const double r = static_cast<double>(reps);
  double sum = 0.0;
  for (std::size_t i = 0; i < reps; ++i) sum += table[i * width + k];
  const double mean = sum / r;
  double ss = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    const double d = table[i * width + k] - mean;
    ss += d * d;
  }
  const double sd = reps > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0;
  return {mean, sd / std::sqrt(r)};
}

// mean, bias, rmse and negative rate of an estimator column against truth.
inline void push_estimator_metrics(ReportCell& cell, const std::string& name,
                                   const std::vector<double>& table, std::size_t width, std::size_t k,
                                   double truth, std::optional<double> expected) {
  const std::size_t reps = table.size() / width;
  const double r = static_cast<double>(reps);
  const auto [mean, se] = column_mean_se(table, width, k);
  double sq_sum = 0.0;
  std::size_t negatives = 0;
  for (std::size_t i = 0; i < reps; ++i) {
    const double e = table[i * width + k] - truth;
    sq_sum += e * e;
    if (table[i * width + k] < 0.0) ++negatives;
  }
  const double mse = sq_sum / r;
  double ss = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    const double e = table[i * width + k] - truth;
    ss += (e * e - mse) * (e * e - mse);
  }
  const double se_mse = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  const double rmse = std::sqrt(mse);
  const double neg_rate = static_cast<double>(negatives) / r;
  cell.metrics.push_back({name + ".mean", mean, se});
  cell.metrics.push_back({name + ".bias", mean - truth, se});
  cell.metrics.push_back({name + ".rmse", rmse, rmse > 0.0 ? se_mse / (2.0 * rmse) : 0.0});
  cell.metrics.push_back({name + ".negative_rate", neg_rate, std::sqrt(neg_rate * (1.0 - neg_rate) / r)});
  if (expected) cell.metrics.push_back({name + ".expected", *expected, 0.0});
}

inline void push_rate(ReportCell& cell, const std::string& name, const std::vector<double>& table,
                      std::size_t width, std::size_t k) {
  const std::size_t reps = table.size() / width;
  double hits = 0.0;
  for (std::size_t i = 0; i < reps; ++i) hits += table[i * width + k];
  const double r = static_cast<double>(reps);
  const double p = hits / r;
  cell.metrics.push_back({name, p, std::sqrt(p * (1.0 - p) / r)});
}

// Asymptotic standard deviation of the Kolmogorov distribution.
inline constexpr double kKolmogorovSd = 0.26033;

struct CellContext {
  const ExperimentConfig& config;
  const DesignSpec& design;
  std::size_t n;
  std::uint64_t seed;
  unsigned threads;
};

inline void run_estimator_consistency(const CellContext& ctx, const ClusterStructure& cs,
                                      ReportCell& cell) {
  const BlockEquicorrModel model(cs, make_deltas(ctx.design.delta, cs));
  const double truth = long_run_variance(model);
  const double mu = ctx.design.mu_units == "absolute"
                        ? ctx.design.mu_grid.front()
                        : ctx.design.mu_grid.front() * std::sqrt(truth / static_cast<double>(ctx.n));
  constexpr std::size_t width = 2;
  const std::size_t reps = ctx.config.replications;
  std::vector<double> table(reps * width);
  parallel_for(reps, ctx.threads, [&](std::size_t r) {
    RandomStream stream = derive_stream(ctx.seed, r);
    const std::vector<double> x = sample(model, mu, stream);
    table[r * width + 0] = lrv_sample_variance(x).value;
    table[r * width + 1] = lrv_cluster(x, cs).value;
  });
  cell.metrics.push_back({"true_lrv", truth, 0.0});
  cell.metrics.push_back({"max_share", max_cluster_share(cs), 0.0});
  push_estimator_metrics(cell, "sample_variance", table, width, 0, truth,
                         expected_lrv_sample_variance(model));
  push_estimator_metrics(cell, "cluster", table, width, 1, truth, expected_lrv_cluster(model));
}

inline void run_contiguity(const CellContext& ctx, const ClusterStructure& cs, ReportCell& cell) {
  const BlockEquicorrModel model(cs, make_deltas(ctx.design.delta, cs));
  std::optional<double> limit = ctx.design.limit_delta;
  if (!limit && ctx.design.delta.kind == "scaled_n") limit = ctx.design.delta.value;
  const LrDiagnostics d =
      lr_diagnostics(model, ctx.config.epsilon, ctx.config.replications, ctx.seed, limit, ctx.threads);
  cell.metrics.push_back({"true_lrv", long_run_variance(model), 0.0});
  cell.metrics.push_back({"max_share", max_cluster_share(cs), 0.0});
  cell.metrics.push_back({"mean_lr", d.mean_lr, d.se_mean_lr});
  cell.metrics.push_back({"moment_1pe", d.moment_1pe, d.se_moment_1pe});
  if (d.ks) {
    cell.metrics.push_back({"ks", *d.ks, kKolmogorovSd / std::sqrt(static_cast<double>(d.reps))});
  }
}

inline void run_test_size_power(const CellContext& ctx, const ClusterStructure& cs, ReportCell& cell) {
  const BlockEquicorrModel model(cs, make_deltas(ctx.design.delta, cs));
  const double truth = long_run_variance(model);
  const double z_bound = ctx.design.z_bound.value_or(truth);
  const bool has_t = cs.clusters() >= 2;
  const auto& grid = ctx.design.mu_grid;
  const std::size_t tests = has_t ? 3 : 2;
  const std::size_t width = grid.size() * tests;
  const std::size_t reps = ctx.config.replications;
  const double alpha = ctx.config.alpha;
  std::vector<double> mus;
  for (double g : grid) {
    mus.push_back(ctx.design.mu_units == "absolute" ? g
                                                    : g * std::sqrt(truth / static_cast<double>(ctx.n)));
  }
  std::vector<double> table(reps * width);
  parallel_for(reps, ctx.threads, [&](std::size_t r) {
    // One base draw per replication, shifted for each grid point, so rejection
    // rates are monotone in the drift replication by replication.
    RandomStream stream = derive_stream(ctx.seed, r);
    const std::vector<double> base = sample(model, 0.0, stream);
    const double u = stream.next_uniform();
    std::vector<double> x(base.size());
    for (std::size_t g = 0; g < mus.size(); ++g) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = base[i] + mus[g];
      double* row = &table[r * width + g * tests];
      row[0] = sign_test(x, alpha, u).rejected ? 1.0 : 0.0;
      row[1] = known_bound_z_test(x, z_bound, alpha).rejected ? 1.0 : 0.0;
      if (has_t) row[2] = cluster_t_test(x, cs, alpha).rejected ? 1.0 : 0.0;
    }
  });
  cell.metrics.push_back({"true_lrv", truth, 0.0});
  cell.metrics.push_back({"max_share", max_cluster_share(cs), 0.0});
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::string suffix = "@mu=" + format_double(grid[g]);
    push_rate(cell, "reject.sign" + suffix, table, width, g * tests + 0);
    push_rate(cell, "reject.z_known" + suffix, table, width, g * tests + 1);
    if (has_t) push_rate(cell, "reject.cluster_t" + suffix, table, width, g * tests + 2);
  }
}

inline void run_graph_estimation(const CellContext& ctx, const ClusterStructure& cs, ReportCell& cell) {
  const auto& design = ctx.design;
  const std::size_t n = ctx.n;
  DependencyGraph graph;
  const std::string& gk = design.graph.kind;
  if (design.data.kind == "star") {
    graph = generate_graph(GraphKind::star, {n, {}});
  } else if (gk == "random") {
    RandomStream gs = derive_stream(derive_seed(ctx.seed, 0x67726170ull), 0);
    graph = random_bounded_degree(n, design.graph.d_max, gs);
  } else if (gk == "cluster") {
    graph = cluster_graph(cs);
  } else {
    graph = generate_graph(graph_kind_from_string(gk), {n, {}});
  }

  std::function<std::vector<double>(RandomStream&)> draw;
  std::function<double(std::size_t, std::size_t)> cov;
  std::vector<double> row_sums(n);
  double truth = 0.0;
  std::optional<BlockEquicorrModel> model;

  if (design.data.kind == "block") {
    model.emplace(cs, make_deltas(design.delta, cs));
    truth = long_run_variance(*model);
    for (std::size_t m = 0; m < cs.clusters(); ++m) {
      const double k = static_cast<double>(cs.size(m));
      for (std::size_t i = 0; i < cs.size(m); ++i) {
        row_sums[cs.offset(m) + i] = 1.0 + (k - 1.0) * model->deltas()[m];
      }
    }
    const BlockEquicorrModel& mdl = *model;
    draw = [&mdl](RandomStream& s) { return sample(mdl, 0.0, s); };
    cov = [&cs, &mdl](std::size_t i, std::size_t j) {
      if (i == j) return 1.0;
      const std::size_t mi = cs.cluster_of(i);
      return mi == cs.cluster_of(j) ? mdl.deltas()[mi] : 0.0;
    };
  } else if (design.data.kind == "edge_shock") {
    const double c = design.data.c;
    truth = edge_shock_long_run_variance(graph, c);
    for (std::size_t i = 0; i < n; ++i) row_sums[i] = 1.0 + static_cast<double>(graph.degree(i)) * c * c;
    draw = [&graph, c](RandomStream& s) { return sample_edge_shock(graph, c, 0.0, s); };
    cov = [&graph, c](std::size_t i, std::size_t j) {
      if (i == j) return 1.0;
      return graph.adjacent(i, j) ? c * c : 0.0;
    };
  } else if (design.data.kind == "star") {
    const double loading = design.data.loading;
    const double off = loading / std::sqrt(static_cast<double>(n - 1));
    truth = star_long_run_variance(n, loading);
    row_sums.assign(n, 1.0 + off);
    row_sums[0] = 1.0 + static_cast<double>(n - 1) * off;
    draw = [n, loading](RandomStream& s) { return sample_star(n, loading, s); };
    cov = [off](std::size_t i, std::size_t j) {
      if (i == j) return 1.0;
      return (i == 0 || j == 0) ? off : 0.0;
    };
  } else {
    throw InvalidInput("unknown data model '" + design.data.kind + "'");
  }

  constexpr std::size_t width = 3;
  const std::size_t reps = ctx.config.replications;
  std::vector<double> table(reps * width);
  parallel_for(reps, ctx.threads, [&](std::size_t r) {
    RandomStream stream = derive_stream(ctx.seed, r);
    const std::vector<double> x = draw(stream);
    table[r * width + 0] = lrv_graph(x, graph).value;
    table[r * width + 1] = lrv_sample_variance(x).value;
    table[r * width + 2] = lrv_second_moment(x).value;
  });

  const GraphStats stats = graph_stats(graph);
  const DependencyGraph empty(n);
  cell.metrics.push_back({"true_lrv", truth, 0.0});
  cell.metrics.push_back({"max_share", max_cluster_share(cs), 0.0});
  cell.metrics.push_back({"d_max", static_cast<double>(stats.d_max), 0.0});
  cell.metrics.push_back({"d_avg", stats.d_avg, 0.0});
  cell.metrics.push_back({"clique_number", static_cast<double>(stats.clique_number), 0.0});
  cell.metrics.push_back({"clique_exact", stats.clique_exact ? 1.0 : 0.0, 0.0});
  cell.metrics.push_back({"sparsity_ratio", stats.sparsity_ratio, 0.0});
  push_estimator_metrics(cell, "graph", table, width, 0, truth,
                         expected_lrv_graph(graph, cov, row_sums));
  push_estimator_metrics(cell, "empty_graph", table, width, 1, truth,
                         expected_lrv_graph(empty, cov, row_sums));
  push_estimator_metrics(cell, "second_moment", table, width, 2, truth, 1.0);
}

}  // namespace detail

struct RunOptions {
  unsigned threads = 0;
};

/// Runs every cell of one config. A failing cell keeps its identifiers and
/// records the error; the remaining cells still run.
inline std::vector<ReportCell> run_cells(const ExperimentConfig& config, const RunOptions& options = {}) {
  std::vector<ReportCell> cells;
  for (const auto& design : config.designs) {
    for (std::size_t n : config.n_grid) {
      ReportCell cell;
      cell.experiment = std::string(to_string(config.kind));
      cell.design_id = design.id;
      cell.n = n;
      cell.reps = config.replications;
      cell.seed = config.master_seed;
      const std::uint64_t seed = cell_seed(config.master_seed, config.kind, design.id, n);
      try {
        const bool graph_only = config.kind == ExperimentKind::graph_estimation &&
                                design.data.kind != "block" && design.graph.kind != "cluster";
        const ClusterStructure cs =
            graph_only ? make_structure({"singletons"}, n) : make_structure(design.clusters, n);
        cell.n_star = cs.n_star();
        cell.clusters = cs.clusters();
        cell.h = cs.heterogeneity();
        const detail::CellContext ctx{config, design, n, seed, options.threads};
        switch (config.kind) {
          case ExperimentKind::estimator_consistency:
            detail::run_estimator_consistency(ctx, cs, cell);
            break;
          case ExperimentKind::contiguity:
            detail::run_contiguity(ctx, cs, cell);
            break;
          case ExperimentKind::test_size_power:
            detail::run_test_size_power(ctx, cs, cell);
            break;
          case ExperimentKind::graph_estimation:
            detail::run_graph_estimation(ctx, cs, cell);
            break;
        }
      } catch (const std::exception& e) {
        cell.metrics.clear();
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline std::string config_hash(const std::vector<ExperimentConfig>& configs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& c : configs) doc.push_back(c.source);
  return hex64(fnv1a64(doc.dump()));
}

inline ExperimentReport run_experiments(const std::vector<ExperimentConfig>& configs,
                                        const RunOptions& options = {}) {
  if (configs.empty()) throw InvalidInput("run_experiments: no configs");
  ExperimentReport report;
  report.provenance.config_hash = config_hash(configs);
  report.provenance.master_seed = configs.front().master_seed;
  for (const auto& c : configs) {
    auto cells = run_cells(c, options);
    report.cells.insert(report.cells.end(), std::make_move_iterator(cells.begin()),
                        std::make_move_iterator(cells.end()));
  }
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  return run_experiments({config}, options);
}

// ---------------------------------------------------------------------------
// Serialization.

inline constexpr std::string_view kCsvHeader = "experiment,design_id,n,n_star,M,h,metric,value,se,reps,seed";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

/// One row per (cell, metric). Failed cells contribute no rows; their error
/// is kept in the JSON form.
inline std::string to_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& c : report.cells) {
    for (const auto& m : c.metrics) {
      os << detail::csv_field(c.experiment) << ',' << detail::csv_field(c.design_id) << ',' << c.n << ','
         << c.n_star << ',' << c.clusters << ',' << format_double(c.h) << ','
         << detail::csv_field(m.name) << ',' << format_double(m.value) << ',' << format_double(m.se)
         << ',' << c.reps << ',' << c.seed << '\n';
    }
  }
  return os.str();
}

inline void to_json(nlohmann::json& j, const ReportCell& c) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : c.metrics) metrics.push_back({{"metric", m.name}, {"value", m.value}, {"se", m.se}});
  j = {{"experiment", c.experiment},
       {"design_id", c.design_id},
       {"n", c.n},
       {"n_star", c.n_star},
       {"M", c.clusters},
       {"h", c.h},
       {"reps", c.reps},
       {"seed", c.seed},
       {"metrics", metrics},
       {"error", c.error ? nlohmann::json(*c.error) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, ReportCell& c) {
  c.experiment = j.at("experiment").get<std::string>();
  c.design_id = j.at("design_id").get<std::string>();
  c.n = j.at("n").get<std::size_t>();
  c.n_star = j.at("n_star").get<std::size_t>();
  c.clusters = j.at("M").get<std::size_t>();
  c.h = j.at("h").get<double>();
  c.reps = j.at("reps").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.metrics.clear();
  for (const auto& m : j.at("metrics")) {
    c.metrics.push_back({m.at("metric").get<std::string>(), m.at("value").get<double>(),
                         m.at("se").get<double>()});
  }
  if (j.at("error").is_null()) {
    c.error.reset();
  } else {
    c.error = j.at("error").get<std::string>();
  }
}

inline void to_json(nlohmann::json& j, const ExperimentReport& r) {
  j = {{"provenance",
        {{"config_hash", r.provenance.config_hash},
         {"master_seed", r.provenance.master_seed},
         {"version", r.provenance.version}}},
       {"cells", r.cells}};
}

inline void from_json(const nlohmann::json& j, ExperimentReport& r) {
  const auto& p = j.at("provenance");
  r.provenance.config_hash = p.at("config_hash").get<std::string>();
  r.provenance.master_seed = p.at("master_seed").get<std::uint64_t>();
  r.provenance.version = p.at("version").get<std::string>();
  r.cells = j.at("cells").get<std::vector<ReportCell>>();
}

inline std::string to_json_text(const ExperimentReport& report) {
  return nlohmann::json(report).dump(2) + "\n";
}

enum class ReportFormat { csv, json };

inline std::string summarize(const ExperimentReport& report, ReportFormat format) {
  return format == ReportFormat::csv ? to_csv(report) : to_json_text(report);
}

}  // namespace lrvlab

#endif  // LRVLAB_HARNESS_HPP
