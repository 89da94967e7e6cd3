#ifndef LRVLAB_LIKELIHOOD_HPP
#define LRVLAB_LIKELIHOOD_HPP

// Exact Gaussian log likelihood ratios and contiguity diagnostics.
//
// For an equicorrelation block of size n with parameter delta, rotate the
// data by any orthogonal B whose first column is ones / sqrt(n). With
// Z_1 = sqrt(n) xbar and R = sum_{k>=2} Z_k^2 = sum (x_i - xbar)^2,
//
//   log dN(mu 1, Sigma)/dN(0, I)(x) = -1/2 log(1 + (n-1) delta) - (n-1)/2 log(1 - delta)
//       + (n-1) delta Z_1^2 / (2 (1 + (n-1) delta)) - delta R / (2 (1 - delta))
//       + sqrt(n) mu Z_1 / (1 + (n-1) delta) - n mu^2 / (2 (1 + (n-1) delta)).
//
// Only Z_1 and R enter, so B never has to be formed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lrvlab/cluster_model.hpp"
#include "lrvlab/error.hpp"
#include "lrvlab/parallel.hpp"
#include "lrvlab/rng.hpp"
#include "lrvlab/special.hpp"

namespace lrvlab {

inline double loglr_equicorr(std::span<const double> x, double mu_bar, double delta) {
  const std::size_t n = x.size();
  if (n == 0) throw InvalidInput("loglr_equicorr: empty data");
  check_block(n, delta);
  const double nd = static_cast<double>(n);
  double sum = 0.0;
  for (double v : x) sum += v;
  const double xbar = sum / nd;
  const double z1 = std::sqrt(nd) * xbar;
  const double top = 1.0 + (nd - 1.0) * delta;
  double out = -0.5 * std::log(top) + (nd - 1.0) * delta * z1 * z1 / (2.0 * top) +
               std::sqrt(nd) * mu_bar * z1 / top - nd * mu_bar * mu_bar / (2.0 * top);
  if (n > 1 && delta != 0.0) {
    double rest = 0.0;
    for (double v : x) {
      const double d = v - xbar;
      rest += d * d;
    }
    const double base = 1.0 - delta;
    out += -0.5 * (nd - 1.0) * std::log(base) - delta * rest / (2.0 * base);
  }
  return out;
}

/// Sum of per-block equicorrelation log LRs, each block shifted by mu_bar.
inline double loglr_cluster(std::span<const double> x, const BlockEquicorrModel& model,
                            double mu_bar) {
  const auto& cs = model.structure();
  if (x.size() != cs.n()) throw InvalidInput("loglr_cluster: data length does not match structure");
  double out = 0.0;
  for (std::size_t m = 0; m < cs.clusters(); ++m) {
    out += loglr_equicorr(x.subspan(cs.offset(m), cs.size(m)), mu_bar, model.deltas()[m]);
  }
  return out;
}

inline double loglr_cluster(std::span<const double> x, const ClusterStructure& cs,
                            const std::vector<double>& deltas, double mu_bar) {
  return loglr_cluster(x, BlockEquicorrModel(cs, deltas), mu_bar);
}

// ---------------------------------------------------------------------------
// Dense oracle.

struct DenseGaussianPair {
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
  Eigen::MatrixXd sigma0;
  Eigen::MatrixXd sigma1;

  Eigen::Index dim() const { return mu0.size(); }

  void validate(std::size_t cap = kDefaultDenseCap) const {
    const Eigen::Index n = mu0.size();
    if (n == 0 || mu1.size() != n || sigma0.rows() != n || sigma0.cols() != n ||
        sigma1.rows() != n || sigma1.cols() != n) {
      throw InvalidInput("DenseGaussianPair: dimensions disagree");
    }
    check_dense_cap(static_cast<std::size_t>(n), cap);
    for (const auto* s : {&sigma0, &sigma1}) {
      if (!is_symmetric(*s, 1e-12 * std::max(1.0, s->cwiseAbs().maxCoeff()))) {
        throw FactorizationError("DenseGaussianPair: covariance is not symmetric");
      }
    }
  }
};

struct DenseLoglr {
  /// Direct log-density difference.
  double value = 0.0;
  /// Spectral formula, present when every |lambda_i| < 1.
  std::optional<double> spectral;
  double max_abs_lambda = 0.0;
};

namespace detail {

// log N(x; mu, L L') up to the common -n/2 log(2 pi).
inline double log_density_kernel(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& r) {
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * log_det - 0.5 * w.squaredNorm();
}

}  // namespace detail

/// Direct log-density difference of N(mu1, sigma1) against N(mu0, sigma0)
/// at x, cross-checked against the spectral series-free formula: with
/// sigma0 = U S U', A = U'(sigma1 - sigma0)U and S^{-1/2} A S^{-1/2} = B L B',
/// q_i = sqrt(1 + lambda_i), Z = B' S^{-1/2} U'(x - mu0), m = B' S^{-1/2} U'(mu1 - mu0),
///
///   log LR = -sum log q_i + 1/2 sum (Z_i (q_i + 1) - m_i)(Z_i (q_i - 1) + m_i) / q_i^2.
///
/// A is any symmetric matrix here; the formula path runs whenever
/// max |lambda_i| < 1 and throws if the two paths disagree.
inline DenseLoglr loglr_dense(const Eigen::VectorXd& x, const DenseGaussianPair& pair,
                              double agreement_tol = 1e-8) {
  pair.validate();
  if (x.size() != pair.dim()) throw InvalidInput("loglr_dense: data length mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt0(pair.sigma0);
  Eigen::LLT<Eigen::MatrixXd> llt1(pair.sigma1);
  if (llt0.info() != Eigen::Success || llt1.info() != Eigen::Success) {
    throw FactorizationError("loglr_dense: covariance is not positive definite");
  }
  DenseLoglr out;
  out.value = detail::log_density_kernel(llt1, x - pair.mu1) -
              detail::log_density_kernel(llt0, x - pair.mu0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(pair.sigma0);
  if (es0.info() != Eigen::Success) throw FactorizationError("loglr_dense: eigensolver failed");
  const Eigen::MatrixXd& u = es0.eigenvectors();
  const Eigen::VectorXd s_inv_sqrt = es0.eigenvalues().array().rsqrt();
  const Eigen::MatrixXd a = u.transpose() * (pair.sigma1 - pair.sigma0) * u;
  Eigen::MatrixXd scaled = s_inv_sqrt.asDiagonal() * a * s_inv_sqrt.asDiagonal();
  scaled = 0.5 * (scaled + scaled.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(scaled);
  if (esm.info() != Eigen::Success) throw FactorizationError("loglr_dense: eigensolver failed");
  const Eigen::VectorXd& lambda = esm.eigenvalues();
  out.max_abs_lambda = lambda.cwiseAbs().maxCoeff();
  if (out.max_abs_lambda >= 1.0) return out;

  const Eigen::MatrixXd rot = esm.eigenvectors().transpose() * s_inv_sqrt.asDiagonal() * u.transpose();
  const Eigen::VectorXd z = rot * (x - pair.mu0);
  const Eigen::VectorXd m = rot * (pair.mu1 - pair.mu0);
  double formula = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double q = std::sqrt(1.0 + lambda(i));
    formula += -std::log(q) +
               0.5 * (z(i) * (q + 1.0) - m(i)) * (z(i) * (q - 1.0) + m(i)) / (q * q);
  }
  out.spectral = formula;
  if (std::fabs(formula - out.value) > agreement_tol * std::max(1.0, std::fabs(out.value))) {
    throw Error("loglr_dense: direct and spectral paths disagree (" + std::to_string(out.value) +
                " vs " + std::to_string(formula) + ")");
  }
  return out;
}

/// Dense pair (0, I) against (mu_bar 1, Sigma(model)).
inline DenseGaussianPair null_pair(const BlockEquicorrModel& model, double mu_bar,
                                   std::size_t cap = kDefaultDenseCap) {
  const auto n = static_cast<Eigen::Index>(model.n());
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, mu_bar),
          Eigen::MatrixXd::Identity(n, n), dense_covariance(model, cap)};
}

// ---------------------------------------------------------------------------
// Limit law W = -log sqrt(1 + delta) + delta Z^2 / (2 (1 + delta)).

class LimitLaw {
 public:
  explicit LimitLaw(double delta) : delta_(delta) {
    if (delta == 0.0 || !(delta > -1.0) || !std::isfinite(delta)) {
      throw InvalidInput("limit law: delta must be nonzero and > -1");
    }
  }

  double delta() const noexcept { return delta_; }
  /// -log sqrt(1 + delta): lower end of the support for delta > 0, upper for delta < 0.
  double support_edge() const { return -0.5 * std::log1p(delta_); }

  double cdf(double w) const {
    const double shifted = w - support_edge();
    const double t = 2.0 * (1.0 + delta_) * shifted / delta_;
    if (delta_ > 0.0) return shifted < 0.0 ? 0.0 : chi2_1_cdf(t);
    return shifted >= 0.0 ? 1.0 : chi2_1_sf(t);
  }

  /// Value of W at a given Z.
  double transform(double z) const {
    return support_edge() + delta_ * z * z / (2.0 * (1.0 + delta_));
  }

 private:
  double delta_;
};

inline double limit_law_cdf(double delta, double w) { return LimitLaw(delta).cdf(w); }

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
  if (sample.empty()) throw InvalidInput("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Monte Carlo diagnostics under N(0, I).

struct LrDiagnostics {
  double mean_lr = 0.0;
  double se_mean_lr = 0.0;
  double moment_1pe = 0.0;
  double se_moment_1pe = 0.0;
  std::optional<double> ks;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinDiagnosticReps = 1000;

namespace detail {

inline std::pair<double, double> mean_and_se(std::span<const double> v) {
  const double r = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / r;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0;
  return {mean, sd / std::sqrt(r)};
}

}  // namespace detail

/// Draws reps samples from N(0, I), evaluates the log LR of the model
/// against it, and reports E[LR], E[LR^(1 + epsilon)] with standard errors.
/// When limit_delta is given and the model is a single cluster, also the KS
/// distance between the log-LR sample and the limit law with that delta.
inline LrDiagnostics lr_diagnostics(const BlockEquicorrModel& model, double epsilon,
                                    std::size_t reps, std::uint64_t seed,
                                    std::optional<double> limit_delta = std::nullopt,
                                    unsigned threads = 0) {
  if (!(epsilon > 0.0)) throw InvalidInput("lr_diagnostics: epsilon must be > 0");
  if (reps < kMinDiagnosticReps) throw InvalidInput("lr_diagnostics: need reps >= 1000");
  const std::size_t n = model.n();
  std::vector<double> log_lr(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    RandomStream stream = derive_stream(seed, r);
    std::vector<double> x(n);
    stream.fill_normal(x);
    log_lr[r] = loglr_cluster(x, model, 0.0);
  });
  std::vector<double> lr(reps);
  std::vector<double> moment(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    lr[r] = std::exp(log_lr[r]);
    moment[r] = std::exp((1.0 + epsilon) * log_lr[r]);
  }
  LrDiagnostics out;
  std::tie(out.mean_lr, out.se_mean_lr) = detail::mean_and_se(lr);
  std::tie(out.moment_1pe, out.se_moment_1pe) = detail::mean_and_se(moment);
  out.n = n;
  out.reps = reps;
  out.seed = seed;
  if (limit_delta && model.structure().clusters() == 1) {
    const LimitLaw law(*limit_delta);
    out.ks = ks_distance(std::move(log_lr), [&](double w) { return law.cdf(w); });
  }
  return out;
}

inline void to_json(nlohmann::json& j, const LrDiagnostics& d) {
  j = {{"mean_lr", d.mean_lr},     {"se_mean_lr", d.se_mean_lr},
       {"moment_1pe", d.moment_1pe}, {"se_moment_1pe", d.se_moment_1pe},
       {"ks", d.ks ? nlohmann::json(*d.ks) : nlohmann::json(nullptr)},
       {"n", d.n},                 {"reps", d.reps},
       {"seed", d.seed}};
}

inline void from_json(const nlohmann::json& j, LrDiagnostics& d) {
  d.mean_lr = j.at("mean_lr").get<double>();
  d.se_mean_lr = j.at("se_mean_lr").get<double>();
  d.moment_1pe = j.at("moment_1pe").get<double>();
  d.se_moment_1pe = j.at("se_moment_1pe").get<double>();
  if (j.at("ks").is_null()) {
    d.ks.reset();
  } else {
    d.ks = j.at("ks").get<double>();
  }
  d.n = j.at("n").get<std::size_t>();
  d.reps = j.at("reps").get<std::size_t>();
  d.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace lrvlab

#endif  // LRVLAB_LIKELIHOOD_HPP
