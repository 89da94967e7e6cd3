#ifndef LRVLAB_GRAPHS_HPP
#define LRVLAB_GRAPHS_HPP

// Dependency graphs: undirected, simple, nodes 0..n-1.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/rng.hpp"

namespace lrvlab {

class DependencyGraph {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  DependencyGraph() = default;
  explicit DependencyGraph(std::size_t n) : adjacency_(n) {}

  /// Duplicate edges (in either orientation) collapse; self-loops and
  /// out-of-range endpoints are rejected.
  DependencyGraph(std::size_t n, const std::vector<Edge>& edges) : adjacency_(n) {
    for (const auto& [i, j] : edges) add_edge(i, j);
    finalize();
  }

  std::size_t n() const noexcept { return adjacency_.size(); }

  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }

  std::size_t edge_count() const noexcept {
    std::size_t twice = 0;
    for (const auto& a : adjacency_) twice += a.size();
    return twice / 2;
  }

  bool adjacent(std::size_t i, std::size_t j) const {
    const auto& a = adjacency_.at(i);
    return std::binary_search(a.begin(), a.end(), j);
  }

  /// Edges with i < j, sorted.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < adjacency_.size(); ++i) {
      for (std::size_t j : adjacency_[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }

  bool operator==(const DependencyGraph& other) const { return adjacency_ == other.adjacency_; }

 private:
  void add_edge(std::size_t i, std::size_t j) {
    if (i >= n() || j >= n()) {
      throw InvalidInput("graph: edge (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") out of range for n = " + std::to_string(n()));
    }
    if (i == j) throw InvalidInput("graph: self-loop at node " + std::to_string(i));
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }

  void finalize() {
    for (auto& a : adjacency_) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
  }

  std::vector<std::vector<std::size_t>> adjacency_;
};

// ---------------------------------------------------------------------------
// Maximum clique.

inline constexpr std::size_t kExactCliqueCap = 64;

namespace detail {

// Branch and bound over 64-bit vertex sets with a greedy colouring bound
// (Tomita & Seki style). Vertices are pre-ordered by degree.
class CliqueSearch {
 public:
  explicit CliqueSearch(const DependencyGraph& g) : n_(g.n()), adj_(g.n(), 0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j : g.neighbors(i)) adj_[i] |= std::uint64_t{1} << j;
    }
  }

  std::size_t run() {
    best_ = n_ > 0 ? 1 : 0;
    std::uint64_t all = n_ == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_) - 1);
    expand(all, 0);
    return best_;
  }

 private:
  void expand(std::uint64_t candidates, std::size_t depth) {
    std::vector<std::size_t> order;
    std::vector<std::size_t> colour;
    colour_sort(candidates, order, colour);
    for (std::size_t idx = order.size(); idx-- > 0;) {
      if (depth + colour[idx] <= best_) return;
      const std::size_t v = order[idx];
      const std::uint64_t next = candidates & adj_[v];
      if (next == 0) {
        best_ = std::max(best_, depth + 1);
      } else {
        expand(next, depth + 1);
      }
      candidates &= ~(std::uint64_t{1} << v);
    }
  }

  // Greedy sequential colouring; order is sorted by colour so that the
  // colour of order[i] bounds the clique size within order[0..i].
  void colour_sort(std::uint64_t candidates, std::vector<std::size_t>& order,
                   std::vector<std::size_t>& colour) const {
    std::size_t k = 0;
    std::uint64_t uncoloured = candidates;
    while (uncoloured != 0) {
      ++k;
      std::uint64_t available = uncoloured;
      while (available != 0) {
        const auto v = static_cast<std::size_t>(std::countr_zero(available));
        available &= ~(std::uint64_t{1} << v);
        available &= ~adj_[v];
        uncoloured &= ~(std::uint64_t{1} << v);
        order.push_back(v);
        colour.push_back(k);
      }
    }
  }

  std::size_t n_;
  std::vector<std::uint64_t> adj_;
  std::size_t best_ = 0;
};

}  // namespace detail

struct CliqueResult {
  std::size_t size = 0;
  bool exact = true;
};

/// Greedy lower bound: grow a clique from each vertex in degree order.
inline std::size_t greedy_clique_bound(const DependencyGraph& g) {
  const std::size_t n = g.n();
  if (n == 0) return 0;
  std::vector<std::size_t> by_degree(n);
  for (std::size_t i = 0; i < n; ++i) by_degree[i] = i;
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](std::size_t a, std::size_t b) { return g.degree(a) > g.degree(b); });
  std::size_t best = 1;
  for (std::size_t seed : by_degree) {
    if (g.degree(seed) + 1 <= best) break;
    std::vector<std::size_t> clique{seed};
    std::vector<std::size_t> nbrs = g.neighbors(seed);
    std::stable_sort(nbrs.begin(), nbrs.end(),
                     [&](std::size_t a, std::size_t b) { return g.degree(a) > g.degree(b); });
    for (std::size_t v : nbrs) {
      bool ok = true;
      for (std::size_t u : clique) {
        if (!g.adjacent(u, v)) {
          ok = false;
          break;
        }
      }
      if (ok) clique.push_back(v);
    }
    best = std::max(best, clique.size());
  }
  return best;
}

inline CliqueResult clique_number(const DependencyGraph& g, std::size_t exact_cap = kExactCliqueCap) {
  if (g.n() <= std::min<std::size_t>(exact_cap, 64)) {
    return {detail::CliqueSearch(g).run(), true};
  }
  return {greedy_clique_bound(g), false};
}

struct GraphStats {
  std::size_t d_max = 0;
  double d_avg = 0.0;
  std::size_t clique_number = 0;
  bool clique_exact = true;
  /// d_max^2 * d_avg / n.
  double sparsity_ratio = 0.0;
};

inline GraphStats graph_stats(const DependencyGraph& g, std::size_t exact_cap = kExactCliqueCap) {
  GraphStats s;
  const std::size_t n = g.n();
  if (n == 0) return s;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s.d_max = std::max(s.d_max, g.degree(i));
    total += g.degree(i);
  }
  s.d_avg = static_cast<double>(total) / static_cast<double>(n);
  const auto clique = clique_number(g, exact_cap);
  s.clique_number = clique.size;
  s.clique_exact = clique.exact;
  const double dm = static_cast<double>(s.d_max);
  s.sparsity_ratio = dm * dm * s.d_avg / static_cast<double>(n);
  return s;
}

// ---------------------------------------------------------------------------
// Generators.

enum class GraphKind { star, cluster, empty, complete, cycle };

inline GraphKind graph_kind_from_string(const std::string& s) {
  if (s == "star") return GraphKind::star;
  if (s == "cluster") return GraphKind::cluster;
  if (s == "empty") return GraphKind::empty;
  if (s == "complete") return GraphKind::complete;
  if (s == "cycle") return GraphKind::cycle;
  throw InvalidInput("unknown graph kind '" + s + "'");
}

struct GraphParams {
  std::size_t n = 0;
  /// Cluster sizes, for GraphKind::cluster.
  std::vector<std::size_t> sizes;
};

/// Disjoint cliques along the clusters of cs.
inline DependencyGraph cluster_graph(const ClusterStructure& cs) {
  std::vector<DependencyGraph::Edge> edges;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const std::size_t off = cs.offset(m);
    for (std::size_t a = 0; a < cs.size(m); ++a) {
      for (std::size_t b = a + 1; b < cs.size(m); ++b) edges.emplace_back(off + a, off + b);
    }
  }
  return DependencyGraph(cs.n(), edges);
}

inline DependencyGraph generate_graph(GraphKind kind, const GraphParams& params) {
  if (kind == GraphKind::cluster) {
    if (params.sizes.empty()) throw InvalidInput("cluster graph needs cluster sizes");
    ClusterStructure cs(params.sizes);
    if (params.n != 0 && params.n != cs.n()) {
      throw InvalidInput("cluster graph: n does not match the cluster sizes");
    }
    return cluster_graph(cs);
  }
  const std::size_t n = params.n;
  if (n == 0) throw InvalidInput("graph needs n >= 1");
  std::vector<DependencyGraph::Edge> edges;
  switch (kind) {
    case GraphKind::star:
      for (std::size_t i = 1; i < n; ++i) edges.emplace_back(0, i);
      break;
    case GraphKind::complete:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      }
      break;
    case GraphKind::cycle:
      if (n >= 3) {
        for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
      } else if (n == 2) {
        edges.emplace_back(0, 1);
      }
      break;
    case GraphKind::empty:
    case GraphKind::cluster:
      break;
  }
  return DependencyGraph(n, edges);
}

/// Union of d_max random matchings, so every degree is at most d_max.
/// Deterministic given the stream.
inline DependencyGraph random_bounded_degree(std::size_t n, std::size_t d_max, RandomStream& stream) {
  if (n == 0) throw InvalidInput("random graph needs n >= 1");
  std::vector<DependencyGraph::Edge> edges;
  std::vector<std::size_t> perm(n);
  for (std::size_t round = 0; round < d_max; ++round) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(stream.next_uniform() * static_cast<double>(i));
      std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
    }
    for (std::size_t i = 0; i + 1 < n; i += 2) edges.emplace_back(perm[i], perm[i + 1]);
  }
  return DependencyGraph(n, edges);
}

// ---------------------------------------------------------------------------
// JSON edge lists: {"n": n, "edges": [[i, j], ...]}, 0-indexed.

inline void to_json(nlohmann::json& j, const DependencyGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  j = {{"n", g.n()}, {"edges", edges}};
}

inline void from_json(const nlohmann::json& j, DependencyGraph& g) {
  if (!j.is_object() || !j.contains("n") || !j.contains("edges")) {
    throw InvalidInput("graph JSON needs \"n\" and \"edges\"");
  }
  const auto n = j.at("n").get<long long>();
  if (n < 1) throw InvalidInput("graph JSON: n must be >= 1");
  std::vector<DependencyGraph::Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw InvalidInput("graph JSON: edges must be pairs");
    const auto a = e[0].get<long long>();
    const auto b = e[1].get<long long>();
    if (a < 0 || b < 0) throw InvalidInput("graph JSON: negative node index");
    edges.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  g = DependencyGraph(static_cast<std::size_t>(n), edges);
}

inline nlohmann::json stats_to_json(const GraphStats& s) {
  return {{"d_max", s.d_max},
          {"d_avg", s.d_avg},
          {"clique_number", s.clique_number},
          {"clique_exact", s.clique_exact},
          {"sparsity_ratio", s.sparsity_ratio}};
}

}  // namespace lrvlab

#endif  // LRVLAB_GRAPHS_HPP
