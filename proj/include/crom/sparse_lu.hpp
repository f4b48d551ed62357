#pragma once

#include "crom/types.hpp"

#include <memory>

namespace crom {

/// Factorize-then-solve interface used by the Newton driver.
class LinearSolver {
 public:
  virtual ~LinearSolver() = default;
  /// Throws crom::Error if the matrix is numerically singular.
  virtual void factorize(const SparseMatrix& matrix) = 0;
  virtual Vector solve(const Vector& rhs) const = 0;
};

/// Sparse direct LU with fill-reducing ordering. Backed by UMFPACK when the
/// build found it, otherwise by Eigen::SparseLU with COLAMD ordering.
///
/// `factorize` reuses the symbolic analysis as long as the sparsity pattern
/// (size and nonzero count) is unchanged.
class SparseDirectSolver : public LinearSolver {
 public:
  SparseDirectSolver();
  ~SparseDirectSolver() override;
  SparseDirectSolver(SparseDirectSolver&&) noexcept;
  SparseDirectSolver& operator=(SparseDirectSolver&&) noexcept;

  void factorize(const SparseMatrix& matrix) override;
  Vector solve(const Vector& rhs) const override;

  static const char* backend_name();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace crom
