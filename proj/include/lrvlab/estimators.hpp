#ifndef LRVLAB_ESTIMATORS_HPP
#define LRVLAB_ESTIMATORS_HPP

// Long-run-variance estimators. Cluster and graph estimates are returned
// raw, with a flag when negative; nothing is truncated at zero.

#include <span>
#include <string_view>
#include <vector>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/graphs.hpp"

namespace lrvlab {

enum class LrvKind { sample_variance, cluster, graph, second_moment };

constexpr std::string_view to_string(LrvKind k) {
  switch (k) {
    case LrvKind::sample_variance: return "sample_variance";
    case LrvKind::cluster: return "cluster";
    case LrvKind::graph: return "graph";
    case LrvKind::second_moment: return "second_moment";
  }
  return "unknown";
}

struct LrvEstimate {
  double value = 0.0;
  LrvKind kind = LrvKind::sample_variance;
  bool negative = false;
};

namespace detail {

inline LrvEstimate make_estimate(double value, LrvKind kind) {
  return {value, kind, value < 0.0};
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace detail

/// (1/n) sum (x_i - xbar)^2.
inline LrvEstimate lrv_sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw InvalidInput("lrv_sample_variance: need n >= 2");
  const double xbar = detail::mean(x);
  double acc = 0.0;
  for (double v : x) {
    const double d = v - xbar;
    acc += d * d;
  }
  return detail::make_estimate(acc / static_cast<double>(x.size()), LrvKind::sample_variance);
}

/// (1/n) sum_m (sum_{i in m} (x_i - xbar))^2, centered at the global mean.
inline LrvEstimate lrv_cluster(std::span<const double> x, const ClusterStructure& cs) {
  if (x.size() != cs.n()) throw InvalidInput("lrv_cluster: data length does not match structure");
  if (x.empty()) throw InvalidInput("lrv_cluster: empty data");
  const double xbar = detail::mean(x);
  double acc = 0.0;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    double s = 0.0;
    for (double v : x.subspan(cs.offset(m), cs.size(m))) s += v - xbar;
    acc += s * s;
  }
  return detail::make_estimate(acc / static_cast<double>(x.size()), LrvKind::cluster);
}

/// (1/n) sum_i sum_{j in N(i) u {i}} (x_i - xbar)(x_j - xbar).
inline LrvEstimate lrv_graph(std::span<const double> x, const DependencyGraph& g) {
  if (x.size() != g.n()) throw InvalidInput("lrv_graph: data length does not match graph");
  if (x.empty()) throw InvalidInput("lrv_graph: empty data");
  const double xbar = detail::mean(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double di = x[i] - xbar;
    double s = di;
    for (std::size_t j : g.neighbors(i)) s += x[j] - xbar;
    acc += di * s;
  }
  return detail::make_estimate(acc / static_cast<double>(x.size()), LrvKind::graph);
}

/// (1/n) sum x_i^2; valid when the mean is known to be zero.
inline LrvEstimate lrv_second_moment(std::span<const double> x) {
  if (x.empty()) throw InvalidInput("lrv_second_moment: empty data");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return detail::make_estimate(acc / static_cast<double>(x.size()), LrvKind::second_moment);
}

/// Exact expectation of lrv_graph under a zero-mean Gaussian with
/// covariance cov(i, j) and row sums row_sums[i] = sum_j cov(i, j):
/// (1/n) sum_i sum_{j in N(i) u {i}} Cov(x_i - xbar, x_j - xbar).
template <class Cov>
double expected_lrv_graph(const DependencyGraph& g, Cov&& cov, std::span<const double> row_sums) {
  const std::size_t n = g.n();
  if (row_sums.size() != n) throw InvalidInput("expected_lrv_graph: row sums length mismatch");
  const double nd = static_cast<double>(n);
  double total = 0.0;
  for (double r : row_sums) total += r;
  const double grand = total / (nd * nd);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += cov(i, i) - 2.0 * row_sums[i] / nd + grand;
    for (std::size_t j : g.neighbors(i)) acc += cov(i, j) - (row_sums[i] + row_sums[j]) / nd + grand;
  }
  return acc / nd;
}

/// Exact expectation of lrv_cluster under a zero-mean block model.
inline double expected_lrv_cluster(const BlockEquicorrModel& model) {
  const auto& cs = model.structure();
  const double nd = static_cast<double>(cs.n());
  std::vector<double> block_var(cs.clusters());
  double total = 0.0;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const double k = static_cast<double>(cs.size(m));
    block_var[m] = k * (1.0 + (k - 1.0) * model.deltas()[m]);
    total += block_var[m];
  }
  double acc = 0.0;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const double share = static_cast<double>(cs.size(m)) / nd;
    acc += block_var[m] * (1.0 - 2.0 * share) + share * share * total;
  }
  return acc / nd;
}

/// Exact expectation of lrv_sample_variance: 1 - sigma_LR^2 / n for unit variances.
inline double expected_lrv_sample_variance(const BlockEquicorrModel& model) {
  return 1.0 - long_run_variance(model) / static_cast<double>(model.n());
}

}  // namespace lrvlab

#endif  // LRVLAB_ESTIMATORS_HPP
