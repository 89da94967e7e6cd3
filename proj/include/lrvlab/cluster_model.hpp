#ifndef LRVLAB_CLUSTER_MODEL_HPP
#define LRVLAB_CLUSTER_MODEL_HPP

// Cluster structures and block-equicorrelation covariance models.
//
// Clusters occupy consecutive index ranges: cluster m covers
// [offset(m), offset(m) + size(m)). Data with arbitrary labels is brought
// into this layout with LabeledPartition.
//
// A block model has covariance Sigma = I + blockdiag(delta_m (1 1' - I)).
// Block m of size k has eigenvalue 1 + (k - 1) delta_m on the normalized
// ones vector and 1 - delta_m on its orthogonal complement, so everything on
// the production path is closed form and O(n). Dense matrices appear only in
// the oracle helpers at the bottom of this header.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lrvlab/error.hpp"

namespace lrvlab {

inline constexpr std::size_t kDefaultDenseCap = 2048;

class ClusterStructure {
 public:
  ClusterStructure() = default;

  explicit ClusterStructure(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty()) throw InvalidInput("cluster structure: empty size list");
    offsets_.reserve(sizes_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t m = 0; m < sizes_.size(); ++m) {
      if (sizes_[m] == 0) {
        throw InvalidInput("cluster structure: cluster " + std::to_string(m) + " has size 0");
      }
      offsets_.push_back(offsets_.back() + sizes_[m]);
      if (sizes_[m] >= 2) n_star_ += sizes_[m];
    }
    if (n_star_ > 0) {
      const double ns = static_cast<double>(n_star_);
      for (std::size_t s : sizes_) {
        if (s >= 2) {
          const double share = static_cast<double>(s) / ns;
          heterogeneity_ += share * share;
        }
      }
    }
  }

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t n() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  /// Number of observations in non-singleton clusters.
  std::size_t n_star() const noexcept { return n_star_; }
  std::size_t clusters() const noexcept { return sizes_.size(); }
  std::size_t size(std::size_t m) const { return sizes_.at(m); }
  std::size_t offset(std::size_t m) const { return offsets_.at(m); }
  /// Sum over non-singleton clusters of (n_m / n_star)^2; 0 when n_star = 0.
  double heterogeneity() const noexcept { return heterogeneity_; }

  /// Cluster containing observation i.
  std::size_t cluster_of(std::size_t i) const {
    if (i >= n()) throw InvalidInput("cluster_of: index out of range");
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
  }

  bool operator==(const ClusterStructure& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t n_star_ = 0;
  double heterogeneity_ = 0.0;
};

inline ClusterStructure build_structure(std::vector<std::size_t> sizes) {
  return ClusterStructure(std::move(sizes));
}

/// max_m n_m / n.
inline double max_cluster_share(const ClusterStructure& cs) {
  const auto& s = cs.sizes();
  return static_cast<double>(*std::max_element(s.begin(), s.end())) /
         static_cast<double>(cs.n());
}

/// Clustering given by arbitrary labels, reordered so that clusters are
/// contiguous. Clusters appear in order of first occurrence; within a
/// cluster the original order is kept.
struct LabeledPartition {
  ClusterStructure structure;
  /// order[k] is the original index of the k-th observation in cluster order.
  std::vector<std::size_t> order;

  template <class Label>
  static LabeledPartition from_labels(std::span<const Label> labels) {
    if (labels.empty()) throw InvalidInput("from_labels: no observations");
    std::map<Label, std::size_t> slot;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = slot.try_emplace(labels[i], members.size());
      if (inserted) members.emplace_back();
      members[it->second].push_back(i);
    }
    LabeledPartition out;
    std::vector<std::size_t> sizes;
    for (const auto& m : members) {
      sizes.push_back(m.size());
      out.order.insert(out.order.end(), m.begin(), m.end());
    }
    out.structure = ClusterStructure(std::move(sizes));
    return out;
  }

  std::vector<double> permute(std::span<const double> x) const {
    if (x.size() != order.size()) throw InvalidInput("permute: length mismatch");
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < order.size(); ++k) out[k] = x[order[k]];
    return out;
  }
};

/// Throws ModelInvalid unless an equicorrelation block of size k with
/// parameter delta is positive definite.
inline void check_block(std::size_t k, double delta, std::size_t cluster = static_cast<std::size_t>(-1)) {
  if (k == 0) throw InvalidInput("block size must be >= 1");
  if (k == 1) return;
  if (!std::isfinite(delta)) {
    throw ModelInvalid("cluster " + std::to_string(cluster) + ": delta is not finite", cluster);
  }
  const double base = 1.0 - delta;
  const double top = 1.0 + static_cast<double>(k - 1) * delta;
  if (!(base > 0.0) || !(top > 0.0)) {
    throw ModelInvalid("cluster " + std::to_string(cluster) + " (size " + std::to_string(k) +
                           ", delta " + std::to_string(delta) +
                           "): covariance block is not positive definite",
                       cluster);
  }
}

class BlockEquicorrModel {
 public:
  BlockEquicorrModel(ClusterStructure structure, std::vector<double> deltas,
                     std::optional<double> c_bound = std::nullopt)
      : structure_(std::move(structure)), deltas_(std::move(deltas)), c_bound_(c_bound) {
    if (deltas_.size() != structure_.clusters()) {
      throw InvalidInput("block model: " + std::to_string(deltas_.size()) + " deltas for " +
                         std::to_string(structure_.clusters()) + " clusters");
    }
    if (c_bound_ && !(*c_bound_ >= 0.0)) throw InvalidInput("block model: c_bound must be >= 0");
    for (std::size_t m = 0; m < deltas_.size(); ++m) {
      const std::size_t k = structure_.size(m);
      if (k == 1) {
        deltas_[m] = 0.0;
        continue;
      }
      check_block(k, deltas_[m], m);
      if (c_bound_) {
        const double c = *c_bound_;
        const double spread = static_cast<double>(k - 1) * std::fabs(deltas_[m]);
        if (std::fabs(deltas_[m]) > c || spread > c) {
          throw BudgetExceeded("cluster " + std::to_string(m) + ": eigenvalues of the "
                               "perturbation exceed c_bound = " + std::to_string(c),
                               m);
        }
      }
    }
  }

  const ClusterStructure& structure() const noexcept { return structure_; }
  const std::vector<double>& deltas() const noexcept { return deltas_; }
  std::optional<double> c_bound() const noexcept { return c_bound_; }
  std::size_t n() const noexcept { return structure_.n(); }

 private:
  ClusterStructure structure_;
  std::vector<double> deltas_;
  std::optional<double> c_bound_;
};

inline BlockEquicorrModel block_model(const ClusterStructure& cs, std::vector<double> deltas,
                                      std::optional<double> c_bound = std::nullopt) {
  return BlockEquicorrModel(cs, std::move(deltas), c_bound);
}

/// Closed-form spectrum of one equicorrelation block.
struct BlockSpectrum {
  std::size_t size = 1;
  double delta = 0.0;
  /// Eigenvalue on ones / sqrt(size), multiplicity 1.
  double top = 1.0;
  /// Eigenvalue on the complement of ones, multiplicity size - 1.
  double base = 1.0;

  std::size_t base_multiplicity() const noexcept { return size - 1; }

  /// Eigenvalues in basis order: top first, then base repeated.
  std::vector<double> eigenvalues() const {
    std::vector<double> out(size, base);
    out[0] = top;
    return out;
  }

  /// Distinct eigenvalues with multiplicities; equal values are merged.
  std::vector<std::pair<double, std::size_t>> multiplicities() const {
    if (size == 1 || top == base) return {{top, size}};
    return {{top, 1}, {base, size - 1}};
  }

  double log_det() const {
    return std::log(top) + static_cast<double>(size - 1) * std::log(base);
  }
};

inline BlockSpectrum spectral_block(std::size_t k, double delta) {
  check_block(k, delta);
  if (k == 1) return BlockSpectrum{1, 0.0, 1.0, 1.0};
  return BlockSpectrum{k, delta, 1.0 + static_cast<double>(k - 1) * delta, 1.0 - delta};
}

inline std::vector<BlockSpectrum> model_spectrum(const BlockEquicorrModel& model) {
  const auto& cs = model.structure();
  std::vector<BlockSpectrum> out;
  out.reserve(cs.clusters());
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    out.push_back(spectral_block(cs.size(m), model.deltas()[m]));
  }
  return out;
}

inline double log_det(const BlockEquicorrModel& model) {
  double acc = 0.0;
  for (const auto& b : model_spectrum(model)) acc += b.log_det();
  return acc;
}

/// (1/n) 1' Sigma 1 = sum_m (n_m / n)(1 + (n_m - 1) delta_m).
inline double long_run_variance(const BlockEquicorrModel& model) {
  const auto& cs = model.structure();
  const double n = static_cast<double>(cs.n());
  double acc = 0.0;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const double k = static_cast<double>(cs.size(m));
    acc += (k / n) * (1.0 + (k - 1.0) * model.deltas()[m]);
  }
  return acc;
}

/// delta_m = (sigma_sq - 1) / (n_m - 1), so that every normalized cluster
/// sum has variance sigma_sq.
inline std::vector<double> deltas_for_common_variance(const ClusterStructure& cs, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw InvalidInput("common variance must be > 0");
  std::vector<double> deltas(cs.clusters());
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const std::size_t k = cs.size(m);
    if (k < 2) {
      throw InvalidInput("common variance: cluster " + std::to_string(m) +
                         " is a singleton; its variance is fixed at 1");
    }
    deltas[m] = (sigma_sq - 1.0) / static_cast<double>(k - 1);
    check_block(k, deltas[m], m);
  }
  return deltas;
}

// ---------------------------------------------------------------------------
// Dense helpers (oracles and validators only).

inline void check_dense_cap(std::size_t n, std::size_t cap) {
  if (n > cap) {
    throw InvalidInput("dense operation on n = " + std::to_string(n) +
                       " exceeds the cap of " + std::to_string(cap));
  }
}

/// Helmert basis of R^k: column 0 is ones / sqrt(k); column j >= 1 has
/// 1/sqrt(j(j+1)) in rows 0..j-1, -j/sqrt(j(j+1)) in row j, zeros below.
inline Eigen::MatrixXd helmert_basis(std::size_t k) {
  if (k == 0) throw InvalidInput("helmert_basis: k must be >= 1");
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(kk, kk);
  b.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(k)));
  for (Eigen::Index j = 1; j < kk; ++j) {
    const double jd = static_cast<double>(j);
    const double scale = 1.0 / std::sqrt(jd * (jd + 1.0));
    b.col(j).head(j).setConstant(scale);
    b(j, j) = -jd * scale;
  }
  return b;
}

inline Eigen::MatrixXd dense_block(std::size_t k, double delta) {
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(kk, kk, delta);
  s.diagonal().setOnes();
  return s;
}

inline Eigen::MatrixXd dense_covariance(const BlockEquicorrModel& model,
                                        std::size_t cap = kDefaultDenseCap) {
  const auto& cs = model.structure();
  check_dense_cap(cs.n(), cap);
  const auto n = static_cast<Eigen::Index>(cs.n());
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const auto off = static_cast<Eigen::Index>(cs.offset(m));
    const auto k = static_cast<Eigen::Index>(cs.size(m));
    sigma.block(off, off, k, k) = dense_block(cs.size(m), model.deltas()[m]);
  }
  return sigma;
}

/// Eigenvectors of the model covariance, block Helmert.
inline Eigen::MatrixXd dense_basis(const ClusterStructure& cs, std::size_t cap = kDefaultDenseCap) {
  check_dense_cap(cs.n(), cap);
  const auto n = static_cast<Eigen::Index>(cs.n());
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const auto off = static_cast<Eigen::Index>(cs.offset(m));
    const auto k = static_cast<Eigen::Index>(cs.size(m));
    b.block(off, off, k, k) = helmert_basis(cs.size(m));
  }
  return b;
}

inline bool is_symmetric(const Eigen::MatrixXd& a, double tol = 0.0) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      if (std::fabs(a(i, j) - a(j, i)) > tol) return false;
    }
  }
  return true;
}

/// Per-cluster average of the off-diagonal entries of a block-diagonal
/// perturbation: delta_m = 1' D_m 1 / (n_m (n_m - 1)). This is the block of
/// the average of P D P' over within-cluster permutations P, so the
/// resulting model keeps 1' D 1.
inline std::vector<double> permutation_average(const Eigen::MatrixXd& delta_dense,
                                               const ClusterStructure& cs) {
  const auto n = static_cast<Eigen::Index>(cs.n());
  if (delta_dense.rows() != n || delta_dense.cols() != n) {
    throw InvalidInput("permutation_average: matrix is not " + std::to_string(cs.n()) + " x " +
                       std::to_string(cs.n()));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t mi = cs.cluster_of(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (delta_dense(i, j) != 0.0 && cs.cluster_of(static_cast<std::size_t>(j)) != mi) {
        throw StructureMismatch("permutation_average: nonzero entry (" + std::to_string(i) +
                                ", " + std::to_string(j) + ") outside the cluster blocks");
      }
    }
  }
  std::vector<double> deltas(cs.clusters(), 0.0);
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    const std::size_t k = cs.size(m);
    if (k < 2) continue;
    const auto off = static_cast<Eigen::Index>(cs.offset(m));
    const auto kk = static_cast<Eigen::Index>(k);
    const auto blk = delta_dense.block(off, off, kk, kk);
    const double off_diag_sum = blk.sum() - blk.diagonal().sum();
    deltas[m] = off_diag_sum / (static_cast<double>(k) * static_cast<double>(k - 1));
  }
  return deltas;
}

struct EigenBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Extreme eigenvalues of a symmetric matrix, for D_n(c) membership checks.
/// Borderline (semi-definite) cases are reported, not decided.
inline EigenBounds eigen_bounds(const Eigen::MatrixXd& a, std::size_t cap = kDefaultDenseCap) {
  if (a.rows() != a.cols()) throw InvalidInput("eigen_bounds: matrix is not square");
  check_dense_cap(static_cast<std::size_t>(a.rows()), cap);
  if (a.rows() == 0) throw InvalidInput("eigen_bounds: empty matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!is_symmetric(a, 1e-12 * scale)) throw InvalidInput("eigen_bounds: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw FactorizationError("eigen_bounds: eigensolver failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

inline bool in_eigen_budget(const EigenBounds& b, double c) {
  return -c <= b.lambda_min && b.lambda_max <= c;
}

// ---------------------------------------------------------------------------
// JSON: structures as an array of sizes, models as {"sizes": [...], "deltas": [...]}.

inline void to_json(nlohmann::json& j, const ClusterStructure& cs) { j = cs.sizes(); }

inline void from_json(const nlohmann::json& j, ClusterStructure& cs) {
  if (!j.is_array()) throw InvalidInput("cluster structure JSON must be an array of sizes");
  std::vector<std::size_t> sizes;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw InvalidInput("cluster structure JSON: sizes must be positive integers");
    }
    sizes.push_back(v.get<std::size_t>());
  }
  cs = ClusterStructure(std::move(sizes));
}

inline nlohmann::json model_to_json(const BlockEquicorrModel& model) {
  nlohmann::json j = {{"sizes", model.structure().sizes()}, {"deltas", model.deltas()}};
  if (model.c_bound()) j["c_bound"] = *model.c_bound();
  return j;
}

inline BlockEquicorrModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("sizes") || !j.contains("deltas")) {
    throw InvalidInput("block model JSON needs \"sizes\" and \"deltas\"");
  }
  ClusterStructure cs = j.at("sizes").get<ClusterStructure>();
  auto deltas = j.at("deltas").get<std::vector<double>>();
  std::optional<double> c;
  if (j.contains("c_bound") && !j.at("c_bound").is_null()) c = j.at("c_bound").get<double>();
  return BlockEquicorrModel(std::move(cs), std::move(deltas), c);
}

}  // namespace lrvlab

#endif  // LRVLAB_CLUSTER_MODEL_HPP
