#pragma once

#include "crom/eqp.hpp"
#include "crom/reduction.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace crom {

enum class AdvectionBackend { Tensorial, Eqp };

std::string backend_label(AdvectionBackend backend);
AdvectionBackend parse_backend(const std::string& label);

/// Global reduced system. State layout mirrors the FOM: [û_1, ..., û_M, p̂_1, ..., p̂_M (, λ)].
class GlobalRomSystem {
 public:
  /// `rules` must hold a rule bound to each component's velocity basis when the backend is Eqp.
  GlobalRomSystem(GridConfig grid, const ReducedModel& model, AdvectionBackend backend,
                  const std::map<std::string, EqpRule>* rules = nullptr);

  const GridConfig& grid() const { return grid_; }
  const ReducedModel& model() const { return *model_; }
  const ReducedComponent& cell(int m) const { return *cells_[m]; }
  AdvectionBackend backend() const { return backend_; }

  Index size() const { return size_; }
  Index velocity_offset(int m) const { return u_offset_[m]; }
  Index pressure_offset(int m) const { return p_offset_[m]; }
  bool has_mean_constraint() const { return mean_constraint_; }

  const SparseMatrix& linear_operator() const { return linear_; }
  const Vector& rhs() const { return rhs_; }
  double assembly_seconds() const { return assembly_seconds_; }

  Vector advection(const Vector& state) const;
  Vector residual(const Vector& state) const;
  SparseMatrix jacobian(const Vector& state) const;

  Vector cell_velocity(const Vector& state, int m) const;
  Vector cell_pressure(const Vector& state, int m) const;

  /// One block per subdomain holding [û_m, p̂_m], plus a final block for λ when present.
  std::vector<std::vector<Index>> block_partition() const;

 private:
  GridConfig grid_;
  const ReducedModel* model_;
  AdvectionBackend backend_;
  std::vector<const ReducedComponent*> cells_;
  std::vector<const EqpRule*> rules_;
  std::vector<Index> u_offset_, p_offset_;
  Index size_ = 0;
  bool mean_constraint_ = false;
  SparseMatrix linear_;
  Vector rhs_;
  double assembly_seconds_ = 0.0;
};

struct RomSolution {
  Vector state;
  SolveReport report;
};

/// Newton from the zero reduced state (or `initial`) with a block LU per step. Singular
/// factorizations end the iteration and are reported as non-convergence.
RomSolution solve_rom_newton(const GlobalRomSystem& system, const NewtonOptions& options = {},
                             const Vector* initial = nullptr);

/// Reduced coordinates to the FOM state layout, u_m = Φ_u û_m and p_m = Φ_p p̂_m.
Vector lift(const GlobalRomSystem& system, const GlobalFomSystem& fom, const Vector& reduced);
/// Orthogonal projection of a FOM state onto the reduced coordinates.
Vector project_state(const GlobalRomSystem& system, const GlobalFomSystem& fom, const Vector& full);

FieldErrors relative_errors(const GlobalFomSystem& fom, const Vector& fom_state, const Vector& lifted_state);

/// CROMRSOL1: u64 M, then (reduced velocity dim, reduced pressure dim) per subdomain,
/// u64 total size, then the f64 state.
void save_rom_solution(const GlobalRomSystem& system, const Vector& state, const std::filesystem::path& path);
Vector load_rom_solution(const GlobalRomSystem& system, const std::filesystem::path& path);

}  // namespace crom
