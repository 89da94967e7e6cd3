#ifndef LRVLAB_ERROR_HPP
#define LRVLAB_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrvlab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: empty size lists, length mismatches, bad probabilities.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A covariance model that is not positive definite.
class ModelInvalid : public Error {
 public:
  ModelInvalid(const std::string& what, std::size_t cluster)
      : Error(what), cluster_(cluster) {}
  explicit ModelInvalid(const std::string& what)
      : Error(what), cluster_(static_cast<std::size_t>(-1)) {}

  /// Offending cluster index, or SIZE_MAX when not tied to a cluster.
  std::size_t cluster() const noexcept { return cluster_; }

 private:
  std::size_t cluster_;
};

/// A model whose perturbation eigenvalues exceed the declared bound c.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, std::size_t cluster)
      : Error(what), cluster_(cluster) {}
  std::size_t cluster() const noexcept { return cluster_; }

 private:
  std::size_t cluster_;
};

/// Dense input that does not respect the declared cluster blocks.
class StructureMismatch : public Error {
 public:
  using Error::Error;
};

/// Cholesky or eigen factorization failure on a dense matrix.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Data for which a statistic is undefined (e.g. zero between-cluster spread).
class DegenerateData : public Error {
 public:
  using Error::Error;
};

}  // namespace lrvlab

#endif  // LRVLAB_ERROR_HPP
