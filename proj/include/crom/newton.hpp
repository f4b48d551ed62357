#pragma once

#include "crom/sparse_lu.hpp"

#include <functional>
#include <vector>

namespace crom {

struct NewtonOptions {
  double tol_rel = 1e-8;
  double tol_abs = 1e-10;
  int max_iter = 50;
  bool line_search = false;  // residual-halving backtracking
};

struct SolveReport {
  int newton_iterations = 0;
  std::vector<double> residual_history;  // entry 0 is the initial residual
  double assembly_seconds = 0.0;
  double factorization_seconds = 0.0;
  double total_seconds = 0.0;
  bool converged = false;

  double final_residual() const { return residual_history.empty() ? 0.0 : residual_history.back(); }
};

struct NonlinearProblem {
  std::function<Vector(const Vector&)> residual;
  std::function<SparseMatrix(const Vector&)> jacobian;
};

/// Plain Newton–Raphson with a direct solve per step (`solver`, or a SparseDirectSolver
/// when null). Stops when ||r|| <= max(tol_rel * ||r_0||, tol_abs). Non-convergence is
/// reported, not thrown; a singular Jacobian propagates as crom::Error.
SolveReport newton_solve(const NonlinearProblem& problem, Vector& x, const NewtonOptions& options,
                         LinearSolver* solver = nullptr);

}  // namespace crom
