#ifndef LRVLAB_SAMPLER_HPP
#define LRVLAB_SAMPLER_HPP

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/graphs.hpp"
#include "lrvlab/rng.hpp"

namespace lrvlab {

/// Exact O(n) draw from N(mu_bar 1, Sigma) for a block model.
///
/// Within a cluster of size k with parameter delta, draw g iid N(0, 1) and
/// set x_i = mu_bar + sqrt(1 - delta)(g_i - gbar) + sqrt(1 + (k - 1) delta) gbar.
/// The two terms live on the complement of ones and on ones respectively,
/// so Var x_i = 1 and Cov(x_i, x_j) = delta, for any delta in the PD range.
inline void sample_into(const BlockEquicorrModel& model, double mu_bar, RandomStream& stream,
                        std::span<double> out) {
  const auto& cs = model.structure();
  if (out.size() != cs.n()) throw InvalidInput("sample_into: output length mismatch");
  stream.fill_normal(out);
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const std::size_t k = cs.size(m);
    const double delta = model.deltas()[m];
    auto block = out.subspan(cs.offset(m), k);
    if (delta == 0.0 || k == 1) {
      for (double& v : block) v += mu_bar;
      continue;
    }
    double sum = 0.0;
    for (double v : block) sum += v;
    const double gbar = sum / static_cast<double>(k);
    const double a = std::sqrt(1.0 - delta);
    const double b = std::sqrt(1.0 + static_cast<double>(k - 1) * delta);
    const double shift = mu_bar + (b - a) * gbar;
    for (double& v : block) v = a * v + shift;
  }
}

inline std::vector<double> sample(const BlockEquicorrModel& model, double mu_bar,
                                  RandomStream& stream) {
  std::vector<double> x(model.n());
  sample_into(model, mu_bar, stream, x);
  return x;
}

/// Dense-factorization draw; cross-validation path for `sample`.
inline Eigen::VectorXd sample_dense(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma,
                                    RandomStream& stream, std::size_t cap = kDefaultDenseCap) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != mean.size()) {
    throw InvalidInput("sample_dense: dimension mismatch");
  }
  check_dense_cap(static_cast<std::size_t>(sigma.rows()), cap);
  if (!is_symmetric(sigma, 1e-12)) throw FactorizationError("sample_dense: sigma is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw FactorizationError("sample_dense: sigma is not positive definite");
  }
  Eigen::VectorXd g(mean.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = stream.next_normal();
  return mean + llt.matrixL() * g;
}

// ---------------------------------------------------------------------------
// Graph designs.

/// Star design with node 0 as the center. Leaves are iid N(0, 1); the
/// center is (loading / sqrt(n - 1)) * sum(leaves) + sqrt(1 - loading^2) * e,
/// so every node has unit variance and Cov(center, leaf) = loading / sqrt(n - 1).
inline std::vector<double> sample_star(std::size_t n, double loading, RandomStream& stream) {
  if (n < 2) throw InvalidInput("sample_star: n must be >= 2");
  if (!(std::fabs(loading) <= 1.0)) throw InvalidInput("sample_star: |loading| must be <= 1");
  std::vector<double> x(n);
  stream.fill_normal(x);
  double leaves = 0.0;
  for (std::size_t i = 1; i < n; ++i) leaves += x[i];
  x[0] = loading / std::sqrt(static_cast<double>(n - 1)) * leaves +
         std::sqrt(1.0 - loading * loading) * x[0];
  return x;
}

inline double star_long_run_variance(std::size_t n, double loading) {
  const double nd = static_cast<double>(n);
  return 1.0 + 2.0 * loading * std::sqrt(nd - 1.0) / nd;
}

inline Eigen::MatrixXd star_covariance(std::size_t n, double loading,
                                       std::size_t cap = kDefaultDenseCap) {
  check_dense_cap(n, cap);
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(nn, nn);
  const double c = loading / std::sqrt(static_cast<double>(n - 1));
  for (Eigen::Index i = 1; i < nn; ++i) s(0, i) = s(i, 0) = c;
  return s;
}

/// Edge-shock design on a dependency graph: every edge carries its own
/// shock u_e shared by its endpoints, x_i = mu + sqrt(1 - d_i c^2) e_i +
/// c * sum_{e ni i} u_e. Unit variances, Cov = c^2 on edges, zero
/// elsewhere, and g is a dependency graph of x. Needs c^2 d_max <= 1.
inline std::vector<double> sample_edge_shock(const DependencyGraph& g, double c, double mu,
                                             RandomStream& stream) {
  const std::size_t n = g.n();
  std::size_t d_max = 0;
  for (std::size_t i = 0; i < n; ++i) d_max = std::max(d_max, g.degree(i));
  if (c * c * static_cast<double>(d_max) > 1.0) {
    throw ModelInvalid("edge shock: c^2 * d_max exceeds 1");
  }
  std::vector<double> x(n);
  stream.fill_normal(x);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = mu + std::sqrt(1.0 - static_cast<double>(g.degree(i)) * c * c) * x[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : g.neighbors(i)) {
      if (i < j) {
        const double u = c * stream.next_normal();
        x[i] += u;
        x[j] += u;
      }
    }
  }
  return x;
}

inline double edge_shock_long_run_variance(const DependencyGraph& g, double c) {
  return 1.0 + 2.0 * static_cast<double>(g.edge_count()) * c * c / static_cast<double>(g.n());
}

}  // namespace lrvlab

#endif  // LRVLAB_SAMPLER_HPP
