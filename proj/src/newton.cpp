#include "crom/newton.hpp"

#include "crom/sparse_lu.hpp"
#include "crom/timer.hpp"

#include <cmath>

namespace crom {

SolveReport newton_solve(const NonlinearProblem& problem, Vector& x, const NewtonOptions& options,
                         LinearSolver* solver) {
  Stopwatch total;
  SolveReport report;
  Vector r = problem.residual(x);
  double norm = r.norm();
  report.residual_history.push_back(norm);
  const double target = std::max(options.tol_rel * norm, options.tol_abs);

  SparseDirectSolver default_solver;
  LinearSolver& lu = solver != nullptr ? *solver : default_solver;
  while (norm > target && report.newton_iterations < options.max_iter) {
    if (!std::isfinite(norm)) break;
    Stopwatch assembly;
    const SparseMatrix jac = problem.jacobian(x);
    report.assembly_seconds += assembly.seconds();
    Stopwatch factor;
    lu.factorize(jac);
    const Vector dx = lu.solve(-r);
    report.factorization_seconds += factor.seconds();

    double step = 1.0;
    Vector trial = x + dx;
    Vector r_trial = problem.residual(trial);
    if (options.line_search) {
      for (int k = 0; k < 10 && !(r_trial.norm() < norm); ++k) {
        step *= 0.5;
        trial = x + step * dx;
        r_trial = problem.residual(trial);
      }
    }
    x = std::move(trial);
    r = std::move(r_trial);
    norm = r.norm();
    report.residual_history.push_back(norm);
    ++report.newton_iterations;
    if (!std::isfinite(norm) || norm > 1e12 * (report.residual_history.front() + options.tol_abs)) break;
  }
  report.converged = std::isfinite(norm) && norm <= target;
  report.total_seconds = total.seconds();
  return report;
}

}  // namespace crom
