#include "crom/sparse_lu.hpp"

#ifdef CROM_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#else
#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>
#endif

namespace crom {

struct SparseDirectSolver::Impl {
#ifdef CROM_HAVE_UMFPACK
  Eigen::UmfPackLU<SparseMatrix> lu;
#else
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
#endif
  Index rows = -1;
  Index nnz = -1;
};

SparseDirectSolver::SparseDirectSolver() : impl_(std::make_unique<Impl>()) {
#ifdef CROM_HAVE_UMFPACK
  // Threshold pivoting at UMFPACK's default of 0.1 loses all accuracy on some
  // saddle-point Jacobians, so partial pivoting is enforced.
  impl_->lu.umfpackControl()(UMFPACK_PIVOT_TOLERANCE) = 1.0;
  impl_->lu.umfpackControl()(UMFPACK_SYM_PIVOT_TOLERANCE) = 1.0;
#endif
}
SparseDirectSolver::~SparseDirectSolver() = default;
SparseDirectSolver::SparseDirectSolver(SparseDirectSolver&&) noexcept = default;
SparseDirectSolver& SparseDirectSolver::operator=(SparseDirectSolver&&) noexcept = default;

void SparseDirectSolver::factorize(const SparseMatrix& matrix) {
  require(matrix.rows() == matrix.cols(), "sparse LU needs a square matrix");
  require(matrix.isCompressed(), "sparse LU needs a compressed matrix");
  if (matrix.rows() != impl_->rows || matrix.nonZeros() != impl_->nnz) {
    impl_->lu.analyzePattern(matrix);
    impl_->rows = matrix.rows();
    impl_->nnz = matrix.nonZeros();
  }
  impl_->lu.factorize(matrix);
  if (impl_->lu.info() != Eigen::Success) {
    impl_->rows = -1;
    throw Error("singular factorization");
  }
}

Vector SparseDirectSolver::solve(const Vector& rhs) const {
  Vector x = impl_->lu.solve(rhs);
  require(impl_->lu.info() == Eigen::Success, "sparse LU solve failed");
  return x;
}

const char* SparseDirectSolver::backend_name() {
#ifdef CROM_HAVE_UMFPACK
  return "umfpack";
#else
  return "eigen-sparselu";
#endif
}

}  // namespace crom
